"""Dataset loading and the on-disk formats for splits, checkpoints, embeddings, reports.

Dataset layout (tab or space separated, ``#`` lines are comments):

* ``edges.tsv``     one ``u v`` pair per line; ids are arbitrary tokens
* ``features.tsv``  sparse ``node feature value`` triples (feature is an int index);
                    an optional ``# num_features=F`` comment fixes the width.
                    Alternatively a dense table whose header starts with ``node``
                    followed by one column name per feature.
* ``labels.tsv``    ``node class`` pairs; class tokens are mapped to ``0..C-1`` in
                    sorted order
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import Graph, build_graph, largest_connected_component
from .knn import AttributeMatrix
from .loss import LossParams
from .models import ModelParams, Variant
from .sampling import SplitSpec
from .trainer import TrainConfig

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
CHECKPOINT_MAGIC = b"EGNNCKPT"
EMBEDDING_MAGIC = b"EGNNEMBD"


class FormatError(ValueError):
    """A file does not match the expected format, version or length."""


@dataclass(frozen=True, eq=False)
class DatasetBundle:
    graph: Graph
    attributes: AttributeMatrix
    labels: np.ndarray | None = None
    names: tuple[str, ...] | None = None
    class_names: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.graph.num_nodes != self.attributes.num_nodes:
            raise ValueError("graph and attributes disagree on the node count")
        if self.labels is not None and self.labels.shape[0] != self.graph.num_nodes:
            raise ValueError("labels and graph disagree on the node count")

    @property
    def num_classes(self) -> int | None:
        return None if self.labels is None else int(self.labels.max() + 1)


# ---------------------------------------------------------------- datasets


def _data_lines(path: Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if line and not line.startswith("#"):
                yield lineno, line.split()


def load_dataset(edge_path, attr_path, label_path=None, restrict_to_lcc: bool = True) -> DatasetBundle:
    """Read the three dataset files, remap ids densely, keep the largest component."""
    edge_path, attr_path = Path(edge_path), Path(attr_path)
    for p in (edge_path, attr_path, label_path):
        if p is not None and not Path(p).exists():
            raise FileNotFoundError(f"dataset file not found: {p}")

    ids: dict[str, int] = {}
    pairs = []
    for lineno, tok in _data_lines(edge_path):
        if len(tok) != 2:
            raise FormatError(f"{edge_path}:{lineno}: expected 2 fields, got {len(tok)}")
        pairs.append((ids.setdefault(tok[0], len(ids)), ids.setdefault(tok[1], len(ids))))
    num_edge_nodes = len(ids)

    nodes, feats, vals, num_features = _read_attributes(attr_path, ids)
    extra = len(ids) - num_edge_nodes
    if extra:
        log.warning("%d node(s) in %s have no edges and will be dropped", extra, attr_path)
    n = len(ids)
    graph = build_graph(pairs, n)
    X = AttributeMatrix.from_triples(nodes, feats, vals, n, num_features)

    labels = class_names = None
    if label_path is not None:
        labels, class_names = _read_labels(Path(label_path), ids)

    names = [None] * n
    for name, i in ids.items():
        names[i] = name
    if restrict_to_lcc:
        graph, mapping = largest_connected_component(graph)
        kept = np.array(sorted(mapping, key=mapping.get), dtype=np.int64)
        X = X.take(kept)
        names = [names[i] for i in kept]
        if labels is not None:
            labels = labels[kept]
    if labels is not None and np.any(labels < 0):
        missing = names[int(np.flatnonzero(labels < 0)[0])]
        raise FormatError(f"{label_path}: node {missing!r} has no label")
    return DatasetBundle(graph, X, labels, tuple(names), class_names)


def _read_attributes(path: Path, ids: dict[str, int]):
    with open(path, encoding="utf-8") as fh:
        head = [ln for ln in (fh.readline() for _ in range(64)) if ln]
    declared = None
    dense_header = None
    for ln in head:
        s = ln.strip()
        if s.startswith("#") and "num_features=" in s:
            declared = int(s.split("num_features=", 1)[1].split()[0])
        elif s and not s.startswith("#"):
            tok = s.split()
            if tok[0] == "node" and tok[1:] != ["feature", "value"]:
                dense_header = tok
            break

    nodes, feats, vals = [], [], []
    if dense_header is not None:
        width = len(dense_header) - 1
        first = True
        for lineno, tok in _data_lines(path):
            if first:
                first = False
                continue
            if len(tok) != width + 1:
                raise FormatError(f"{path}:{lineno}: expected {width + 1} fields, got {len(tok)}")
            try:
                row = np.array([float(v) for v in tok[1:]])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            node = ids.setdefault(tok[0], len(ids))
            nz = np.flatnonzero(row)
            nodes += [node] * nz.shape[0]
            feats += nz.tolist()
            vals += row[nz].tolist()
        return nodes, feats, vals, width

    for lineno, tok in _data_lines(path):
        if tok == ["node", "feature", "value"]:
            continue
        if len(tok) != 3:
            raise FormatError(f"{path}:{lineno}: expected 3 fields, got {len(tok)}")
        try:
            feat, val = int(tok[1]), float(tok[2])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
        if feat < 0:
            raise FormatError(f"{path}:{lineno}: negative feature index")
        nodes.append(ids.setdefault(tok[0], len(ids)))
        feats.append(feat)
        vals.append(val)
    width = max(feats) + 1 if feats else 0
    if declared is not None:
        if declared < width:
            raise FormatError(f"{path}: feature index {width - 1} exceeds num_features={declared}")
        width = declared
    return nodes, feats, vals, width


def _read_labels(path: Path, ids: dict[str, int]):
    raw: dict[int, str] = {}
    for lineno, tok in _data_lines(path):
        if len(tok) != 2:
            raise FormatError(f"{path}:{lineno}: expected 2 fields, got {len(tok)}")
        if tok[0] in ids:
            raw[ids[tok[0]]] = tok[1]
    names = sorted(set(raw.values()), key=lambda s: (not s.lstrip("-").isdigit(), int(s) if s.lstrip("-").isdigit() else 0, s))
    index = {c: i for i, c in enumerate(names)}
    labels = np.full(len(ids), -1, dtype=np.int64)
    for node, c in raw.items():
        labels[node] = index[c]
    return labels, tuple(names)


def write_dataset(bundle: DatasetBundle, directory) -> None:
    """Write ``edges.tsv``, ``features.tsv`` and (if labeled) ``labels.tsv``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    names = bundle.names or tuple(str(i) for i in range(bundle.graph.num_nodes))
    with open(d / "edges.tsv", "w", encoding="utf-8") as fh:
        for u, v in bundle.graph.edges():
            fh.write(f"{names[u]}\t{names[v]}\n")
    m = bundle.attributes.rows.tocoo()
    with open(d / "features.tsv", "w", encoding="utf-8") as fh:
        fh.write(f"# num_features={bundle.attributes.num_features}\n")
        for r, c, v in zip(m.row, m.col, m.data):
            fh.write(f"{names[r]}\t{c}\t{float(v)!r}\n")
    if bundle.labels is not None:
        cls = bundle.class_names or tuple(str(i) for i in range(bundle.num_classes))
        with open(d / "labels.tsv", "w", encoding="utf-8") as fh:
            for i, c in enumerate(bundle.labels):
                fh.write(f"{names[i]}\t{cls[c]}\n")


# ---------------------------------------------------------------- splits


def save_split(split: SplitSpec, path) -> None:
    lines = [f"# edgeless-gnn split v{FORMAT_VERSION}", f"seed {split.seed}"]
    for name, ids in (("train", split.train_ids), ("val", split.val_ids), ("test", split.test_ids)):
        lines.append(f"[{name}]")
        lines.append(" ".join(str(i) for i in ids))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_split(path) -> SplitSpec:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or not text[0].startswith("# edgeless-gnn split v"):
        raise FormatError(f"{path}: not a split file")
    version = int(text[0].rsplit("v", 1)[1])
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported split version {version}")
    seed = 0
    sections: dict[str, list[int]] = {}
    current = None
    for line in text[1:]:
        s = line.strip()
        if s.startswith("seed "):
            seed = int(s.split()[1])
        elif s.startswith("[") and s.endswith("]"):
            current = s[1:-1]
            sections[current] = []
        elif s and current is not None:
            sections[current] += [int(t) for t in s.split()]
    if set(sections) != {"train", "val", "test"}:
        raise FormatError(f"{path}: expected [train], [val] and [test] sections")
    split = SplitSpec(tuple(sections["train"]), tuple(sections["val"]), tuple(sections["test"]), seed)
    split.validate()
    return split


# ---------------------------------------------------------------- binary containers


def _pack(magic: bytes, header: dict, arrays: list[np.ndarray]) -> bytes:
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    parts = [magic, struct.pack("<IQ", FORMAT_VERSION, len(head)), head]
    for a in arrays:
        parts.append(np.ascontiguousarray(a, dtype=a.dtype.newbyteorder("<")).tobytes())
    return b"".join(parts)


def _unpack(blob: bytes, magic: bytes, what: str):
    fixed = len(magic) + 12
    if len(blob) < fixed or blob[:len(magic)] != magic:
        raise FormatError(f"not a {what} file")
    version, head_len = struct.unpack("<IQ", blob[len(magic):fixed])
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported {what} version {version}")
    if len(blob) < fixed + head_len:
        raise FormatError(f"truncated {what} header")
    header = json.loads(blob[fixed:fixed + head_len])
    return header, memoryview(blob)[fixed + head_len:]


def _read_arrays(body: memoryview, specs: list[tuple[str, tuple[int, ...]]], what: str) -> list[np.ndarray]:
    expected = sum(np.dtype(dt).itemsize * int(np.prod(shape)) for dt, shape in specs)
    if len(body) != expected:
        raise FormatError(f"{what} payload is {len(body)} bytes, expected {expected}")
    out, pos = [], 0
    for dt, shape in specs:
        size = np.dtype(dt).itemsize * int(np.prod(shape))
        out.append(np.frombuffer(body[pos:pos + size], dtype=np.dtype(dt).newbyteorder("<"))
                   .astype(dt).reshape(shape))
        pos += size
    return out


def checkpoint_bytes(params: ModelParams, config: TrainConfig | None = None,
                     history: list | None = None, extra: dict | None = None) -> bytes:
    header = {
        "variant": params.variant.value,
        "in_dim": params.in_dim,
        "embedding_dim": params.embedding_dim,
        "num_layers": params.num_layers,
        "hidden_dim": params.hidden_dim,
        "final_activation": params.final_activation,
        "shapes": [list(w.shape) for w in params.weights],
        "train_config": None if config is None else _config_dict(config),
        "history": [list(h) for h in (history or [])],
        "extra": extra or {},
    }
    return _pack(CHECKPOINT_MAGIC, header, [w.astype(np.float64) for w in params.weights])


def parse_checkpoint(blob: bytes):
    """Returns ``(params, train_config_dict, history, extra)``."""
    header, body = _unpack(blob, CHECKPOINT_MAGIC, "checkpoint")
    shapes = [tuple(s) for s in header["shapes"]]
    weights = _read_arrays(body, [("<f8", s) for s in shapes], "checkpoint")
    params = ModelParams(Variant.parse(header["variant"]), header["in_dim"], header["embedding_dim"],
                         header["num_layers"], header["hidden_dim"], header["final_activation"],
                         [w.astype(np.float64) for w in weights])
    params.validate()
    history = [tuple(h) for h in header["history"]]
    return params, header["train_config"], history, header["extra"]


def save_checkpoint(path, params: ModelParams, config: TrainConfig | None = None,
                    history: list | None = None, extra: dict | None = None) -> None:
    Path(path).write_bytes(checkpoint_bytes(params, config, history, extra))


def load_checkpoint(path):
    return parse_checkpoint(Path(path).read_bytes())


def _config_dict(config: TrainConfig) -> dict:
    d = dataclasses.asdict(config)
    d["loss_params"] = dataclasses.asdict(config.loss_params)
    return d


def train_config_from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    d["loss_params"] = LossParams(**d["loss_params"])
    return TrainConfig(**d)


# ---------------------------------------------------------------- embeddings


def save_embeddings_binary(path, Z: np.ndarray, node_ids) -> None:
    Z = np.asarray(Z, dtype=np.float64)
    ids = np.asarray(node_ids, dtype=np.int64)
    if ids.shape[0] != Z.shape[0]:
        raise ValueError("one node id per embedding row required")
    dim = Z.shape[1] if Z.ndim == 2 else 0
    header = {"rows": int(Z.shape[0]), "dim": int(dim)}
    Path(path).write_bytes(_pack(EMBEDDING_MAGIC, header, [ids, Z.reshape(Z.shape[0], dim)]))


def load_embeddings_binary(path) -> tuple[np.ndarray, np.ndarray]:
    """Returns ``(node_ids, Z)``."""
    header, body = _unpack(Path(path).read_bytes(), EMBEDDING_MAGIC, "embedding")
    rows, dim = header["rows"], header["dim"]
    ids, Z = _read_arrays(body, [("<i8", (rows,)), ("<f8", (rows, dim))], "embedding")
    return ids.astype(np.int64), Z.astype(np.float64)


def save_embeddings_text(path, Z: np.ndarray, node_ids) -> None:
    """One row per line: node id followed by the embedding values."""
    Z = np.asarray(Z, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        for nid, row in zip(node_ids, Z):
            fh.write(str(int(nid)) + " " + " ".join(repr(float(v)) for v in row) + "\n")


def load_embeddings_text(path) -> tuple[np.ndarray, np.ndarray]:
    ids, rows = [], []
    for lineno, tok in _data_lines(Path(path)):
        try:
            ids.append(int(tok[0]))
            rows.append([float(v) for v in tok[1:]])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
    if rows and len({len(r) for r in rows}) != 1:
        raise FormatError(f"{path}: rows have different lengths")
    Z = np.array(rows, dtype=np.float64) if rows else np.zeros((0, 0))
    return np.array(ids, dtype=np.int64), Z


# ---------------------------------------------------------------- run configuration


@dataclass
class RunConfig:
    """Flat ``key = value`` configuration for a full pipeline run."""

    edges: str = ""
    features: str = ""
    labels: str = ""
    k: int = 3
    variant: str = "sage"
    dim: int = 64
    num_layers: int = 1
    final_activation: str = "identity"
    learning_rate: float = 5e-4
    weight_decay: float = 5e-4
    max_epochs: int = 500
    minibatch_size: int = 512
    patience: int = 30
    early_stopping: bool = True
    alpha: float = 3.0
    beta: float = 1.0
    gamma: float = 1.0
    b: float = 0.0
    train_ratio: float = 0.85
    val_ratio: float = 0.05
    test_ratio: float = 0.10
    seed: int = 0
    mask_fraction: float = 0.0
    eval_seed: int = 0
    kmeans_restarts: int = 10
    logreg_reg: float = 1e-4
    tasks: str = "lp,nc,cd"

    def __post_init__(self) -> None:
        Variant.parse(self.variant)
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not 0.0 <= self.mask_fraction <= 1.0:
            raise ValueError("mask_fraction must lie in [0, 1]")
        self.loss_params()
        self.train_config()

    def loss_params(self) -> LossParams:
        return LossParams(self.alpha, self.beta, self.gamma, self.b)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.weight_decay, self.max_epochs,
                           self.minibatch_size, self.patience, self.loss_params(), self.seed)

    @property
    def ratios(self) -> tuple[float, float, float]:
        return (self.train_ratio, self.val_ratio, self.test_ratio)

    def with_overrides(self, **kw) -> RunConfig:
        kw = {k: v for k, v in kw.items() if v is not None}
        return dataclasses.replace(self, **kw)

    def canonical(self) -> str:
        return "\n".join(f"{k} = {v}" for k, v in sorted(dataclasses.asdict(self).items()))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def resolve_paths(self, base) -> RunConfig:
        base = Path(base)
        out = {}
        for key in ("edges", "features", "labels"):
            val = getattr(self, key)
            if val and not Path(val).is_absolute():
                out[key] = str(base / val)
        return dataclasses.replace(self, **out)


def _coerce(field_type, value: str):
    t = field_type if isinstance(field_type, str) else getattr(field_type, "__name__", str(field_type))
    if t == "bool":
        low = value.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if t == "int":
        return int(value)
    if t == "float":
        return float(value)
    return value


def parse_run_config(text: str, source: str = "<config>") -> RunConfig:
    types = {f.name: f.type for f in dataclasses.fields(RunConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{source}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise FormatError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _coerce(types[key], value)
        except ValueError as exc:
            raise FormatError(f"{source}:{lineno}: {exc}") from None
    return RunConfig(**values)


def load_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_run_config(path.read_text(encoding="utf-8"), str(path)).resolve_paths(path.parent)


def save_run_config(config: RunConfig, path) -> None:
    Path(path).write_text(config.canonical() + "\n", encoding="utf-8")


# ---------------------------------------------------------------- metric reports


def report_lines(results: dict[tuple[str, str], float], seed: int, config_hash: str,
                 method: str = "edgeless-gnn") -> list[str]:
    """One JSON object per ``(task, metric)``, keys sorted."""
    return [json.dumps({"method": method, "task": task, "metric": metric, "value": round(float(v), 12),
                        "seed": seed, "config_hash": config_hash}, sort_keys=True)
            for (task, metric), v in sorted(results.items())]


def save_report(path, lines: list[str]) -> None:
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def load_report(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line]


def report_table(rows: list[dict]) -> str:
    out = [f"{'method':<14}{'task':<22}{'metric':<10}{'value':>10}"]
    for r in rows:
        out.append(f"{r['method']:<14}{r['task']:<22}{r['metric']:<10}{r['value']:>10.4f}")
    return "\n".join(out)
