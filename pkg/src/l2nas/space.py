"""Architecture search spaces as blocks of edge x operation matrices.

A continuous action is a tuple of real matrices (one per block) with entries
in [0, 1]. ``discretize`` maps it onto a :class:`DiscreteArch`, a tuple of
binary matrices of the same shapes.
"""

from __future__ import annotations

import enum
import itertools
import math
import re
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

Action = tuple  # tuple[np.ndarray, ...], one float matrix per block


class Discretizer(str, enum.Enum):
    ROW_ARGMAX = "row_argmax"
    DARTS_TOP2 = "darts_top2"


NB201_OPS = ("none", "skip_connect", "avg_pool_3x3", "nor_conv_1x1", "nor_conv_3x3")
# the "none" op is not selectable after discretization in the DARTS space
DARTS_OPS = (
    "max_pool_3x3",
    "avg_pool_3x3",
    "skip_connect",
    "sep_conv_3x3",
    "sep_conv_5x5",
    "dil_conv_3x3",
    "dil_conv_5x5",
)
OFA_OPS = tuple(f"mbconv_e{e}_k{k}" for e in (3, 4, 6) for k in (3, 5, 7))
OFA_DEPTHS = ("depth_2", "depth_3", "depth_4")

# (source, target) node pairs, in NB-201 arch-string order
NB201_EDGES = ((0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3))


class SpaceError(ValueError):
    pass


def darts_rows(node_count: int) -> int:
    """Edge count of a cell whose node ``k`` has ``k + 2`` incoming edges."""
    return sum(k + 2 for k in range(node_count))


def darts_bands(node_count: int) -> list[tuple[int, int]]:
    """Contiguous ``[start, end)`` row ranges, one per intermediate node."""
    bands = []
    start = 0
    for k in range(node_count):
        bands.append((start, start + k + 2))
        start += k + 2
    return bands


@dataclass(frozen=True)
class MatrixBlock:
    rows: int
    cols: int
    op_names: tuple[str, ...]
    discretizer: Discretizer = Discretizer.ROW_ARGMAX
    node_count: int | None = None

    def __post_init__(self):
        if self.rows < 1 or self.cols < 2:
            raise SpaceError(f"block needs rows >= 1 and cols >= 2, got {self.rows}x{self.cols}")
        if len(self.op_names) != self.cols:
            raise SpaceError(f"{len(self.op_names)} op names for {self.cols} columns")
        if self.discretizer == Discretizer.DARTS_TOP2:
            if self.node_count is None or self.node_count < 1:
                raise SpaceError("DARTS_TOP2 block requires node_count >= 1")
            if darts_rows(self.node_count) != self.rows:
                raise SpaceError(
                    f"DARTS_TOP2 block with {self.node_count} nodes needs "
                    f"{darts_rows(self.node_count)} rows, got {self.rows}"
                )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def size(self) -> int:
        """Number of distinct discrete matrices this block admits."""
        if self.discretizer == Discretizer.ROW_ARGMAX:
            return self.cols**self.rows
        return math.prod(math.comb(k + 2, 2) * self.cols**2 for k in range(self.node_count))

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "op_names": list(self.op_names),
            "discretizer": self.discretizer.value,
            "node_count": self.node_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MatrixBlock":
        return cls(
            rows=d["rows"],
            cols=d["cols"],
            op_names=tuple(d["op_names"]),
            discretizer=Discretizer(d["discretizer"]),
            node_count=d.get("node_count"),
        )


@dataclass(frozen=True)
class SearchSpaceSpec:
    name: str
    blocks: tuple[MatrixBlock, ...]
    total_dim: int = field(init=False)

    def __post_init__(self):
        if not self.blocks:
            raise SpaceError("a search space needs at least one block")
        object.__setattr__(self, "blocks", tuple(self.blocks))
        object.__setattr__(self, "total_dim", sum(b.rows * b.cols for b in self.blocks))

    @property
    def shapes(self) -> list[tuple[int, int]]:
        return [b.shape for b in self.blocks]

    @property
    def size(self) -> int:
        return math.prod(b.size for b in self.blocks)

    def to_dict(self) -> dict:
        return {"name": self.name, "blocks": [b.to_dict() for b in self.blocks]}

    @classmethod
    def from_dict(cls, d: dict) -> "SearchSpaceSpec":
        return cls(d["name"], tuple(MatrixBlock.from_dict(b) for b in d["blocks"]))


def builtin_space(name: str, E: int | None = None, O: int | None = None) -> SearchSpaceSpec:
    """Build one of the named spaces: nb201, darts, ofa_mbv3 or synthetic(E, O)."""
    if name == "nb201":
        return SearchSpaceSpec("nb201", (MatrixBlock(6, 5, NB201_OPS),))
    if name == "darts":
        cell = MatrixBlock(14, 7, DARTS_OPS, Discretizer.DARTS_TOP2, node_count=4)
        return SearchSpaceSpec("darts", (cell, cell))
    if name == "ofa_mbv3":
        return SearchSpaceSpec(
            "ofa_mbv3", (MatrixBlock(20, 9, OFA_OPS), MatrixBlock(5, 3, OFA_DEPTHS))
        )
    if name == "synthetic":
        if E is None or O is None or E < 1 or O < 2:
            raise SpaceError(f"synthetic space needs E >= 1 and O >= 2, got E={E}, O={O}")
        ops = tuple(f"op{j}" for j in range(O))
        return SearchSpaceSpec(f"synthetic_{E}x{O}", (MatrixBlock(E, O, ops),))
    raise SpaceError(f"unknown search space {name!r}")


def space_from_name(name: str) -> SearchSpaceSpec:
    """Inverse of ``SearchSpaceSpec.name`` for builtin spaces (``synthetic_6x5`` etc)."""
    m = re.fullmatch(r"synthetic_(\d+)x(\d+)", name)
    if m:
        return builtin_space("synthetic", int(m.group(1)), int(m.group(2)))
    return builtin_space(name)


class DiscreteArch:
    """Per-block binary matrices. Equality and hashing go through ``key``."""

    __slots__ = ("blocks", "_key")

    def __init__(self, blocks: Sequence[np.ndarray]):
        self.blocks = tuple(np.asarray(b, dtype=np.int8) for b in blocks)
        for b in self.blocks:
            b.setflags(write=False)
        self._key = None

    @property
    def key(self) -> str:
        if self._key is None:
            segments = []
            for bi, m in enumerate(self.blocks):
                for ri, row in enumerate(m):
                    for oi in np.flatnonzero(row):
                        segments.append(f"{bi}:{ri}={oi}")
            self._key = "|".join(segments)
        return self._key

    def ops(self, block: int = 0) -> list[int]:
        """Selected op index per row of a ROW_ARGMAX block."""
        return [int(i) for i in np.argmax(self.blocks[block], axis=1)]

    def as_action(self) -> Action:
        return tuple(b.astype(np.float64) for b in self.blocks)

    def __eq__(self, other):
        return isinstance(other, DiscreteArch) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        return f"DiscreteArch({self.key!r})"


def _check_action(space: SearchSpaceSpec, a: Sequence[np.ndarray]) -> None:
    if len(a) != len(space.blocks):
        raise SpaceError(f"action has {len(a)} blocks, space has {len(space.blocks)}")
    for m, b in zip(a, space.blocks):
        if np.shape(m) != b.shape:
            raise SpaceError(f"action block shape {np.shape(m)} != {b.shape}")


def discretize_row_argmax(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m)
    out = np.zeros(m.shape, dtype=np.int8)
    # np.argmax returns the first occurrence, i.e. the lowest column on ties
    out[np.arange(m.shape[0]), np.argmax(m, axis=1)] = 1
    return out


def discretize_darts(m: np.ndarray, node_count: int) -> np.ndarray:
    """Keep the two strongest incoming edges per node, one op on each."""
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != darts_rows(node_count):
        raise SpaceError(
            f"{node_count} nodes need {darts_rows(node_count)} rows, got shape {m.shape}"
        )
    out = np.zeros(m.shape, dtype=np.int8)
    for start, end in darts_bands(node_count):
        band = m[start:end]
        # flat argmax over row-major order gives lowest (row, col) on ties
        i1, j1 = np.unravel_index(np.argmax(band), band.shape)
        rest = band.copy().astype(np.float64)
        rest[i1, :] = -np.inf
        i2, j2 = np.unravel_index(np.argmax(rest), rest.shape)
        out[start + i1, j1] = 1
        out[start + i2, j2] = 1
    return out


def discretize(space: SearchSpaceSpec, a: Sequence[np.ndarray]) -> DiscreteArch:
    _check_action(space, a)
    blocks = []
    for m, b in zip(a, space.blocks):
        if b.discretizer == Discretizer.ROW_ARGMAX:
            blocks.append(discretize_row_argmax(m))
        else:
            blocks.append(discretize_darts(m, b.node_count))
    return DiscreteArch(blocks)


def is_valid_arch(space: SearchSpaceSpec, arch: DiscreteArch) -> bool:
    if len(arch.blocks) != len(space.blocks):
        return False
    for m, b in zip(arch.blocks, space.blocks):
        if m.shape != b.shape or not np.isin(m, (0, 1)).all():
            return False
        row_sums = m.sum(axis=1)
        if b.discretizer == Discretizer.ROW_ARGMAX:
            if not (row_sums == 1).all():
                return False
        else:
            if (row_sums > 1).any():
                return False
            for start, end in darts_bands(b.node_count):
                if row_sums[start:end].sum() != 2:
                    return False
    return True


def arch_key(space: SearchSpaceSpec, arch: DiscreteArch) -> str:
    """Canonical ``block:row=op`` key; all-zero rows are omitted."""
    return arch.key


_KEY_SEGMENT = re.compile(r"(\d+):(\d+)=(\d+)")


def parse_arch_key(space: SearchSpaceSpec, key: str) -> DiscreteArch:
    blocks = [np.zeros(b.shape, dtype=np.int8) for b in space.blocks]
    for seg in key.split("|") if key else []:
        m = _KEY_SEGMENT.fullmatch(seg)
        if not m:
            raise SpaceError(f"malformed arch key segment {seg!r}")
        bi, ri, oi = (int(g) for g in m.groups())
        if bi >= len(blocks) or ri >= blocks[bi].shape[0] or oi >= blocks[bi].shape[1]:
            raise SpaceError(f"arch key segment {seg!r} out of range for {space.name}")
        if blocks[bi][ri].any():
            raise SpaceError(f"arch key selects two ops on block {bi} row {ri}")
        blocks[bi][ri, oi] = 1
    arch = DiscreteArch(blocks)
    if not is_valid_arch(space, arch):
        raise SpaceError(f"arch key {key!r} is not a valid {space.name} architecture")
    if arch.key != key:
        raise SpaceError(f"arch key {key!r} is not in canonical form")
    return arch


def nb201_arch_str(arch: DiscreteArch) -> str:
    ops = arch.ops(0)
    if len(ops) != len(NB201_EDGES) or arch.blocks[0].shape[1] != len(NB201_OPS):
        raise SpaceError("not an nb201 architecture")
    nodes = []
    for target in (1, 2, 3):
        tokens = [
            f"{NB201_OPS[ops[e]]}~{src}"
            for e, (src, dst) in enumerate(NB201_EDGES)
            if dst == target
        ]
        nodes.append("|" + "|".join(tokens) + "|")
    return "+".join(nodes)


def parse_nb201_arch_str(s: str) -> DiscreteArch:
    nodes = s.strip().split("+")
    if len(nodes) != 3:
        raise SpaceError(f"malformed NB-201 arch string {s!r}")
    m = np.zeros((6, 5), dtype=np.int8)
    for target, node in enumerate(nodes, start=1):
        if not (node.startswith("|") and node.endswith("|")):
            raise SpaceError(f"malformed NB-201 node {node!r}")
        tokens = node[1:-1].split("|")
        if len(tokens) != target:
            raise SpaceError(f"node {target} needs {target} inputs, got {node!r}")
        for src, tok in enumerate(tokens):
            op, _, idx = tok.partition("~")
            if op not in NB201_OPS:
                raise SpaceError(f"unknown NB-201 op {op!r}")
            if idx != str(src):
                raise SpaceError(f"edge token {tok!r} should read from node {src}")
            m[NB201_EDGES.index((src, target)), NB201_OPS.index(op)] = 1
    return DiscreteArch([m])


def random_action(space: SearchSpaceSpec, rng: np.random.Generator) -> Action:
    return tuple(rng.random(b.shape) for b in space.blocks)


def random_arch(space: SearchSpaceSpec, rng: np.random.Generator) -> DiscreteArch:
    """Uniform draw over the discrete space (random-search baseline)."""
    blocks = []
    for b in space.blocks:
        m = np.zeros(b.shape, dtype=np.int8)
        if b.discretizer == Discretizer.ROW_ARGMAX:
            m[np.arange(b.rows), rng.integers(0, b.cols, size=b.rows)] = 1
        else:
            for start, end in darts_bands(b.node_count):
                rows = rng.choice(end - start, size=2, replace=False)
                ops = rng.integers(0, b.cols, size=2)
                m[start + rows, ops] = 1
        blocks.append(m)
    return DiscreteArch(blocks)


def flatten(a: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.asarray(m, dtype=np.float64).ravel() for m in a])


def unflatten(space: SearchSpaceSpec, v: np.ndarray) -> Action:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (space.total_dim,):
        raise SpaceError(f"vector of shape {v.shape} does not match total_dim {space.total_dim}")
    out = []
    offset = 0
    for b in space.blocks:
        n = b.rows * b.cols
        out.append(v[offset : offset + n].reshape(b.shape).copy())
        offset += n
    return tuple(out)


def _block_choices(b: MatrixBlock) -> Iterator[np.ndarray]:
    if b.discretizer == Discretizer.ROW_ARGMAX:
        for ops in itertools.product(range(b.cols), repeat=b.rows):
            m = np.zeros(b.shape, dtype=np.int8)
            m[np.arange(b.rows), ops] = 1
            yield m
        return
    per_node = []
    for start, end in darts_bands(b.node_count):
        opts = []
        for r1, r2 in itertools.combinations(range(start, end), 2):
            for o1, o2 in itertools.product(range(b.cols), repeat=2):
                opts.append(((r1, o1), (r2, o2)))
        per_node.append(opts)
    for combo in itertools.product(*per_node):
        m = np.zeros(b.shape, dtype=np.int8)
        for pair in combo:
            for r, o in pair:
                m[r, o] = 1
        yield m


def iter_archs(space: SearchSpaceSpec) -> Iterator[DiscreteArch]:
    """Every architecture in the space; only sensible for small spaces."""
    for blocks in itertools.product(*(list(_block_choices(b)) for b in space.blocks)):
        yield DiscreteArch(blocks)
