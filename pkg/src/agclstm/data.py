"""Skeleton-sequence ingestion, temporal sampling, and synthetic actions.

Three sources feed the models: a native line-oriented dataset container
(bit-exact round-trip at 17 significant digits), a parser for the common
25-joint capture-device text layout, and a seeded generator of oscillating
limb motions that stands in for motion-capture corpora at desk scale.
"""

import re
from dataclasses import dataclass

import numpy as np

from .graph import SkeletonGraph

CONTAINER_MAGIC = "skeldata"
CONTAINER_VERSION = 1
FLOAT_FMT = "%.17g"  # round-trips float64 exactly


class DataFormatError(ValueError):
    """Malformed dataset text; message carries the 1-based line number."""


@dataclass
class SkeletonSequence:
    """T frames of N joints in 3D camera space, plus labels and provenance."""

    frames: np.ndarray
    label: int = -1
    subject: int = 0
    camera: int = 0
    source: str = ""

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3 or self.frames.shape[2] != 3:
            raise ValueError(f"frames must be (T, N, 3), got {self.frames.shape}")
        if self.frames.shape[0] < 1:
            raise ValueError("a sequence needs at least one frame")
        if not np.isfinite(self.frames).all():
            raise ValueError("frames contain non-finite coordinates")

    @property
    def num_frames(self):
        return self.frames.shape[0]

    @property
    def num_joints(self):
        return self.frames.shape[1]

    def with_frames(self, frames):
        return SkeletonSequence(frames, label=self.label, subject=self.subject,
                                camera=self.camera, source=self.source)


def center_root(seq, root):
    """Translate the whole sequence so the first frame's root joint is (0,0,0).

    Removes placement variance; disable via the config normalize switch.
    """
    return seq.with_frames(seq.frames - seq.frames[0, root])


def sample_fixed_length(seq, t_target, mode, rng=None):
    """Resample to exactly `t_target` frames.

    eval: deterministic uniform stride from the start (index floor(t*T/T')).
    train: integer stride with a random start offset inside the slack.
    Shorter sequences repeat their last frame to reach the target.
    """
    if t_target < 1:
        raise ValueError(f"t_target must be >= 1, got {t_target}")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be train or eval, got {mode!r}")
    t = seq.num_frames
    if t <= t_target:
        idx = list(range(t)) + [t - 1] * (t_target - t)
    elif mode == "eval":
        idx = [(k * t) // t_target for k in range(t_target)]
    else:
        if rng is None:
            raise ValueError("train-mode sampling needs an rng")
        stride = t // t_target
        span = stride * (t_target - 1) + 1
        offset = int(rng.integers(0, t - span + 1))
        idx = [offset + k * stride for k in range(t_target)]
    return seq.with_frames(seq.frames[idx])


# -- native container ---------------------------------------------------------


def write_dataset(path, dataset, graph, class_names):
    """Serialize sequences to the native text container (one file per split)."""
    for name in class_names:
        if not name or any(ch.isspace() for ch in name):
            raise ValueError(f"class name {name!r} must be a single token")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{CONTAINER_MAGIC} {CONTAINER_VERSION}\n")
        fh.write(f"joints {graph.num_joints}\n")
        fh.write(f"root {graph.root}\n")
        fh.write("edges " + " ".join(f"{a}-{b}" for a, b in graph.edges) + "\n")
        fh.write("classes " + " ".join(class_names) + "\n")
        fh.write(f"samples {len(dataset)}\n")
        for seq in dataset:
            if seq.num_joints != graph.num_joints:
                raise ValueError(f"sample has {seq.num_joints} joints, "
                                 f"container declares {graph.num_joints}")
            fh.write(f"sample {seq.label} {seq.num_frames} "
                     f"{seq.subject} {seq.camera}\n")
            for t in range(seq.num_frames):
                fh.write(" ".join(FLOAT_FMT % v for v in seq.frames[t].ravel()))
                fh.write("\n")


class _Lines:
    """Line cursor that reports 1-based line numbers in errors."""

    def __init__(self, text):
        self.lines = text.splitlines()
        self.pos = 0

    def next(self, what):
        while self.pos < len(self.lines):
            ln = self.lines[self.pos]
            self.pos += 1
            if ln.strip():
                return ln
        raise DataFormatError(f"line {self.pos + 1}: unexpected end of file, "
                              f"expected {what}")

    @property
    def lineno(self):
        return self.pos  # line just consumed, 1-based


def _expect_key(lines, key):
    ln = lines.next(f"'{key}' line")
    parts = ln.split()
    if parts[0] != key:
        raise DataFormatError(f"line {lines.lineno}: expected '{key}', got {parts[0]!r}")
    return parts[1:]


def _ints(parts, lines, what):
    try:
        return [int(p) for p in parts]
    except ValueError:
        raise DataFormatError(f"line {lines.lineno}: bad integer in {what}") from None


def read_dataset(path_or_text, source=""):
    """Parse the native container; returns (sequences, header dict)."""
    if "\n" in str(path_or_text):
        text = path_or_text
    else:
        source = source or str(path_or_text)
        with open(path_or_text, "r", encoding="utf-8") as fh:
            text = fh.read()
    lines = _Lines(text)

    magic = lines.next("container magic").split()
    if magic[0] != CONTAINER_MAGIC or len(magic) != 2:
        raise DataFormatError(f"line {lines.lineno}: not a {CONTAINER_MAGIC} file")
    if _ints(magic[1:], lines, "version")[0] != CONTAINER_VERSION:
        raise DataFormatError(f"line {lines.lineno}: unsupported container version")
    n = _ints(_expect_key(lines, "joints"), lines, "joint count")[0]
    if n < 1:
        raise DataFormatError(f"line {lines.lineno}: joint count must be >= 1")
    root = _ints(_expect_key(lines, "root"), lines, "root")[0]
    if not 0 <= root < n:
        raise DataFormatError(f"line {lines.lineno}: root {root} outside [0, {n})")
    edge_parts = _expect_key(lines, "edges")
    edges = []
    for p in edge_parts:
        m = re.fullmatch(r"(\d+)-(\d+)", p)
        if not m:
            raise DataFormatError(f"line {lines.lineno}: bad edge token {p!r}")
        a, b = int(m.group(1)), int(m.group(2))
        if a >= n or b >= n or a == b:
            raise DataFormatError(f"line {lines.lineno}: edge {p} does not fit "
                                  f"{n} joints")
        edges.append((a, b))
    class_names = _expect_key(lines, "classes")
    count = _ints(_expect_key(lines, "samples"), lines, "sample count")[0]

    header = {"joints": n, "root": root, "edges": edges,
              "classes": list(class_names)}
    dataset = []
    for si in range(count):
        fields = _ints(_expect_key(lines, "sample"), lines, "sample header")
        if len(fields) != 4:
            raise DataFormatError(f"line {lines.lineno}: sample header needs "
                                  f"4 integers, got {len(fields)}")
        label, t_len, subject, camera = fields
        if t_len < 1:
            raise DataFormatError(f"line {lines.lineno}: sample with {t_len} frames")
        if not -1 <= label < len(class_names):
            raise DataFormatError(f"line {lines.lineno}: label {label} outside "
                                  f"the declared {len(class_names)} classes")
        frames = np.empty((t_len, n, 3))
        for t in range(t_len):
            ln = lines.next(f"frame {t} of sample {si}")
            vals = ln.split()
            if len(vals) != n * 3:
                raise DataFormatError(f"line {lines.lineno}: frame needs {n * 3} "
                                      f"values, got {len(vals)}")
            try:
                frames[t] = np.array(vals, dtype=np.float64).reshape(n, 3)
            except ValueError:
                raise DataFormatError(f"line {lines.lineno}: bad float in frame") from None
        dataset.append(SkeletonSequence(frames, label=label, subject=subject,
                                        camera=camera,
                                        source=f"{source}#{si}" if source else f"#{si}"))
    return dataset, header


def graph_from_header(header):
    return SkeletonGraph(num_joints=header["joints"], edges=tuple(header["edges"]),
                         root=header["root"])


# -- capture-device .skeleton text layout -------------------------------------

_FILENAME_RE = re.compile(r"S(\d+)C(\d+)P(\d+)R(\d+)A(\d+)")


def parse_skeleton_filename(name):
    """Pull (setup, camera, performer, replication, action) codes from a
    conventional file name; returns None when the name does not match."""
    m = _FILENAME_RE.search(name)
    if not m:
        return None
    keys = ("setup", "camera", "performer", "replication", "action")
    return dict(zip(keys, (int(g) for g in m.groups())))


def choose_primary_actor(tracks):
    """Pick the body id with the largest total joint displacement.

    `tracks` maps body id -> {frame index: (N, 3) array}. Displacement is
    the sum of |coordinate deltas| between that body's consecutive observed
    frames; single-frame tracks score 0. Ties break on the smaller id.
    """
    if not tracks:
        raise ValueError("no bodies to choose from")
    best_id, best_score = None, -1.0
    for bid in sorted(tracks):
        obs = tracks[bid]
        ts = sorted(obs)
        score = 0.0
        for a, b in zip(ts, ts[1:]):
            score += float(np.abs(obs[b] - obs[a]).sum())
        if score > best_score:
            best_id, best_score = bid, score
    return best_id


def parse_ntu_skeleton(text, filename="", num_joints=25):
    """Parse the 25-joint capture-device text layout into one sequence.

    Layout: frame count; per frame a body count, then per body an info
    line, a joint count, and one line per joint whose first three fields
    are x, y, z. Multi-body frames are resolved by choosing the single
    body with the largest total displacement; frames where that body is
    missing carry its nearest observed pose forward (or backward at the
    start). Label, subject, and camera come from the conventional
    file-name codes when `filename` is given (action code is 1-based).
    """
    lines = _Lines(text)

    def next_int(what):
        ln = lines.next(what)
        try:
            return int(ln.split()[0])
        except ValueError:
            raise DataFormatError(f"line {lines.lineno}: expected {what}, "
                                  f"got {ln.strip()!r}") from None

    t_len = next_int("frame count")
    if t_len < 1:
        raise DataFormatError(f"line {lines.lineno}: frame count must be >= 1, "
                              f"got {t_len}")
    tracks = {}
    for t in range(t_len):
        n_body = next_int(f"body count of frame {t}")
        if n_body < 0:
            raise DataFormatError(f"line {lines.lineno}: negative body count")
        for _ in range(n_body):
            info = lines.next("body info").split()
            body_id = info[0]
            n_joint = next_int("joint count")
            if n_joint != num_joints:
                raise DataFormatError(f"line {lines.lineno}: expected {num_joints} "
                                      f"joints, got {n_joint}")
            coords = np.empty((num_joints, 3))
            for j in range(n_joint):
                vals = lines.next(f"joint {j}").split()
                if len(vals) < 3:
                    raise DataFormatError(f"line {lines.lineno}: joint record has "
                                          f"{len(vals)} fields, expected >= 3")
                try:
                    coords[j] = [float(v) for v in vals[:3]]
                except ValueError:
                    raise DataFormatError(f"line {lines.lineno}: bad coordinate "
                                          f"in joint record") from None
            tracks.setdefault(body_id, {})[t] = coords
    if not tracks:
        raise DataFormatError("file contains no bodies in any frame")

    primary = choose_primary_actor(tracks)
    obs = tracks[primary]
    observed_ts = sorted(obs)
    frames = np.empty((t_len, num_joints, 3))
    for t in range(t_len):
        if t in obs:
            frames[t] = obs[t]
        else:
            past = [x for x in observed_ts if x < t]
            frames[t] = obs[past[-1]] if past else obs[observed_ts[0]]

    label, subject, camera = -1, 0, 0
    codes = parse_skeleton_filename(filename) if filename else None
    if codes:
        label = codes["action"] - 1
        subject = codes["performer"]
        camera = codes["camera"]
    return SkeletonSequence(frames, label=label, subject=subject, camera=camera,
                            source=filename or "skeleton-text")


def write_ntu_skeleton(seq, body_id=72057594037931101):
    """Emit a single-body file in the capture-device layout (x y z fields
    only); parse_ntu_skeleton reads it back bit-exactly."""
    out = [str(seq.num_frames)]
    for t in range(seq.num_frames):
        out.append("1")
        out.append(f"{body_id} 0 1 1 1 1 0 0 0 2")
        out.append(str(seq.num_joints))
        for j in range(seq.num_joints):
            out.append(" ".join(FLOAT_FMT % v for v in seq.frames[t, j]))
    return "\n".join(out) + "\n"


# -- synthetic actions --------------------------------------------------------


@dataclass(frozen=True)
class ClassMotion:
    """One action class: which joints oscillate and how."""

    name: str
    joints: tuple
    freq: float      # oscillation cycles over the whole sequence
    amp: float       # peak displacement in meters at the most distal joint
    phase: float = 0.0


@dataclass(frozen=True)
class SyntheticActionSpec:
    """Desk-scale stand-in for a motion-capture corpus.

    At least two classes must move the same joint set with different
    motion parameters, so the dataset contains a genuinely confusable
    pair and nearest-neighbor shortcuts stay imperfect.
    """

    classes: tuple
    noise_sd: float = 0.015
    frames_range: tuple = (40, 60)
    sway_amp: float = 0.05
    placement_range: float = 0.5

    def __post_init__(self):
        if len(self.classes) < 2:
            raise ValueError("need at least two classes")
        if self.frames_range[0] < 2 or self.frames_range[1] < self.frames_range[0]:
            raise ValueError(f"bad frames_range {self.frames_range}")
        confusable = False
        for i, a in enumerate(self.classes):
            for b in self.classes[i + 1:]:
                if (set(a.joints) == set(b.joints)
                        and (a.freq, a.amp, a.phase) != (b.freq, b.amp, b.phase)):
                    confusable = True
        if not confusable:
            raise ValueError("spec needs two classes moving the same joints "
                             "with different parameters")

    @property
    def num_classes(self):
        return len(self.classes)


def body15_rest_pose():
    """Neutral standing pose for the 15-joint skeleton, in meters."""
    return np.array([
        [0.00, 0.90, 0.00],   # pelvis
        [0.00, 1.20, 0.00],   # torso
        [0.00, 1.50, 0.00],   # head
        [0.18, 1.35, 0.00],   # l_shoulder
        [0.30, 1.10, 0.00],   # l_elbow
        [0.35, 0.85, 0.00],   # l_wrist
        [-0.18, 1.35, 0.00],  # r_shoulder
        [-0.30, 1.10, 0.00],  # r_elbow
        [-0.35, 0.85, 0.00],  # r_wrist
        [0.10, 0.85, 0.00],   # l_hip
        [0.12, 0.45, 0.00],   # l_knee
        [0.13, 0.05, 0.00],   # l_ankle
        [-0.10, 0.85, 0.00],  # r_hip
        [-0.12, 0.45, 0.00],  # r_knee
        [-0.13, 0.05, 0.00],  # r_ankle
    ])


def default_synthetic_spec():
    """Three classes; the two wave classes differ only in tempo.

    Amplitudes are large relative to limb lengths on purpose: the encoder
    sees absolute poses, and displacements much smaller than the static
    skeleton leave class evidence buried under the shared pose at the
    hidden sizes this corpus is meant for.
    """
    return SyntheticActionSpec(classes=(
        ClassMotion("wave_fast", joints=(6, 7, 8), freq=3.0, amp=0.9),
        ClassMotion("wave_slow", joints=(6, 7, 8), freq=1.5, amp=0.9),
        ClassMotion("kick", joints=(12, 13, 14), freq=2.2, amp=0.85),
    ))


def _joint_direction(j):
    # deterministic pseudo-random unit vector per joint index
    v = np.array([np.sin(1.3 * j + 0.7), np.cos(0.9 * j + 0.2),
                  np.sin(2.1 * j + 1.1)])
    return v / np.linalg.norm(v)


def generate_synthetic(spec, count, seed, rest_pose=None):
    """`count` labeled sequences (labels round-robin over the classes).

    Each sample perturbs a rest pose with: the class's limb oscillation
    (amplitude ramping toward the distal joint, random phase and amplitude
    jitter), a slow whole-body sway, a random placement offset, and i.i.d.
    coordinate noise. Deterministic for a given seed.
    """
    rng = np.random.default_rng(seed)
    rest = body15_rest_pose() if rest_pose is None else np.asarray(rest_pose, float)
    n = rest.shape[0]
    lo, hi = spec.frames_range
    out = []
    for idx in range(count):
        label = idx % spec.num_classes
        cls = spec.classes[label]
        t_len = int(rng.integers(lo, hi + 1))
        phase = cls.phase + rng.uniform(0.0, 2.0 * np.pi)
        amp = cls.amp * rng.uniform(0.8, 1.2)
        sway_dir = _joint_direction(int(rng.integers(0, 1000)))
        sway_freq = rng.uniform(0.2, 0.6)
        sway_phase = rng.uniform(0.0, 2.0 * np.pi)
        placement = rng.uniform(-spec.placement_range, spec.placement_range, size=3)

        ts = np.arange(t_len) / (t_len - 1)
        frames = np.tile(rest, (t_len, 1, 1))
        for rank, j in enumerate(cls.joints):
            scale = amp * (rank + 1) / len(cls.joints)
            wave = scale * np.sin(2.0 * np.pi * cls.freq * ts + phase)
            frames[:, j, :] += wave[:, None] * _joint_direction(j)[None, :]
        sway = spec.sway_amp * np.sin(2.0 * np.pi * sway_freq * ts + sway_phase)
        frames += sway[:, None, None] * sway_dir[None, None, :]
        frames += placement[None, None, :]
        if spec.noise_sd > 0:
            frames += rng.normal(0.0, spec.noise_sd, size=frames.shape)
        out.append(SkeletonSequence(frames, label=label,
                                    subject=idx, camera=0,
                                    source=f"synthetic:{cls.name}:{idx}"))
    return out


TEST_SEED_OFFSET = 1000003  # keeps train/test draws disjoint


def generate_split(spec, n_train, n_test, seed):
    """Train/test datasets from disjoint seeds derived from one base seed."""
    train = generate_synthetic(spec, n_train, seed)
    test = generate_synthetic(spec, n_test, seed + TEST_SEED_OFFSET)
    return train, test


def class_names(spec):
    return [c.name for c in spec.classes]
