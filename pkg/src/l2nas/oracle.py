"""Accuracy oracles and the accuracy -> reward transforms.

Three sources are supported: a tabular lookup file, a deterministic
synthetic landscape, and an external evaluator reached over a
newline-delimited protocol (subprocess stdio or TCP).
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import queue
import shlex
import socket
import subprocess
import threading
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .space import (
    Discretizer,
    DiscreteArch,
    SearchSpaceSpec,
    SpaceError,
    builtin_space,
    iter_archs,
    parse_arch_key,
    parse_nb201_arch_str,
    space_from_name,
)

SPLITS = ("valid", "test")
DEFAULT_EVAL_TIMEOUT_S = 600.0
ENUMERATION_CAP = 10**7


class OracleError(Exception):
    pass


class MissingArch(OracleError, KeyError):
    pass


class TabularFormatError(OracleError, ValueError):
    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.lineno = lineno


class ProtocolError(OracleError):
    pass


class EvaluatorError(OracleError):
    """The evaluator answered ``ERR <message>``."""


class EvaluatorTimeout(OracleError, TimeoutError):
    pass


class SpaceTooLarge(OracleError):
    pass


# --- rewards ---------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class RewardMode:
    kind: str = "simple"  # "simple" | "rescaled"
    acc_env: float | None = None

    def __post_init__(self):
        if self.kind not in ("simple", "rescaled"):
            raise ValueError(f"unknown reward mode {self.kind!r}")
        if self.kind == "rescaled" and (self.acc_env is None or not 0 < self.acc_env <= 1):
            raise ValueError(f"rescaled reward needs acc_env in (0, 1], got {self.acc_env}")

    def __call__(self, acc: float) -> float:
        if self.kind == "simple":
            return reward_simple(acc)
        return reward_rescaled(acc, self.acc_env)


def reward_simple(acc: float) -> float:
    """``100 ** acc`` for an accuracy given as a fraction."""
    if not 0.0 <= acc <= 1.0:
        raise ValueError(f"accuracy must be a fraction in [0, 1], got {acc}")
    return 100.0**acc


def reward_rescaled(acc: float, acc_env: float) -> float:
    """Environment-normalised reward; zero when ``acc == acc_env``."""
    if acc_env <= 0:
        raise ValueError(f"acc_env must be positive, got {acc_env}")
    if acc < 0:
        raise ValueError(f"accuracy must be non-negative, got {acc}")
    return 100.0 ** (acc / acc_env) / 100.0 - 1.0


# --- oracle base -----------------------------------------------------------


class Oracle:
    """Memoising front for an accuracy source.

    ``evaluations`` counts calls that reached the underlying source; repeat
    queries are served from the memo.
    """

    def __init__(self, space: SearchSpaceSpec, metadata: dict | None = None):
        self.space = space
        self.metadata = dict(metadata or {})
        self.evaluations = 0
        self._memo: dict[tuple[str, str], float] = {}
        self._lock = threading.Lock()

    @property
    def acc_env(self) -> float | None:
        return self.metadata.get("acc_env")

    def query(self, arch: DiscreteArch, split: str = "valid") -> float:
        if split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {split!r}")
        k = (arch.key, split)
        with self._lock:
            if k in self._memo:
                return self._memo[k]
        acc = self._evaluate(arch, split)
        with self._lock:
            if k not in self._memo:
                self._memo[k] = acc
                self.evaluations += 1
            return self._memo[k]

    def _evaluate(self, arch: DiscreteArch, split: str) -> float:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# --- tabular ---------------------------------------------------------------


class TabularOracle(Oracle):
    def __init__(self, space: SearchSpaceSpec, records: dict[str, tuple[float, float]], metadata=None):
        super().__init__(space, metadata)
        self.records = records

    def _evaluate(self, arch, split):
        try:
            valid, test = self.records[arch.key]
        except KeyError:
            raise MissingArch(arch.key) from None
        return valid if split == "valid" else test


def _check_fraction(path, lineno, name, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TabularFormatError(path, lineno, f"{name} must be a number, got {value!r}")
    if not 0.0 <= value <= 1.0:
        raise TabularFormatError(path, lineno, f"{name}={value} is outside [0, 1]")
    return float(value)


def load_tabular(path) -> TabularOracle:
    path = Path(path)
    records: dict[str, tuple[float, float]] = {}
    space = None
    header = None
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise TabularFormatError(path, lineno, f"invalid JSON ({e.msg})") from None
            if not isinstance(obj, dict):
                raise TabularFormatError(path, lineno, "expected a JSON object")
            if header is None:
                if "space" not in obj:
                    raise TabularFormatError(path, lineno, "first line must be a header with 'space'")
                try:
                    space = space_from_name(obj["space"])
                except SpaceError as e:
                    raise TabularFormatError(path, lineno, str(e)) from None
                header = obj
                if header.get("acc_env") is not None:
                    header["acc_env"] = _check_fraction(path, lineno, "acc_env", header["acc_env"])
                continue
            try:
                key = obj["key"]
                valid = _check_fraction(path, lineno, "valid_acc", obj["valid_acc"])
                test = _check_fraction(path, lineno, "test_acc", obj["test_acc"])
            except KeyError as e:
                raise TabularFormatError(path, lineno, f"missing field {e.args[0]!r}") from None
            if key in records:
                raise TabularFormatError(path, lineno, f"duplicate key {key!r}")
            try:
                parse_arch_key(space, key)
            except SpaceError as e:
                raise TabularFormatError(path, lineno, str(e)) from None
            records[key] = (valid, test)
    if header is None:
        raise TabularFormatError(path, 1, "empty tabular file")
    meta = {"dataset": header.get("dataset"), "acc_env": header.get("acc_env")}
    return TabularOracle(space, records, meta)


def write_tabular(path, space_name: str, rows: Iterable[tuple[str, float, float]],
                  dataset: str | None = None, acc_env: float | None = None) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"space": space_name, "dataset": dataset, "acc_env": acc_env}) + "\n")
        for key, valid, test in rows:
            fh.write(json.dumps({"key": key, "valid_acc": valid, "test_acc": test}) + "\n")
            n += 1
    return n


def import_nb201(src, dst, dataset: str | None = None, percent: bool = False,
                 acc_env: float | None = None) -> int:
    """Convert an NB-201 export keyed by arch strings into a tabular file.

    ``src`` is either JSONL or CSV with columns ``arch`` (or ``arch_str``),
    ``valid_acc`` and ``test_acc``. With ``percent`` the accuracies are
    divided by 100.
    """
    src = Path(src)
    scale = 0.01 if percent else 1.0
    if src.suffix.lower() == ".csv":
        with src.open(encoding="utf-8", newline="") as fh:
            raw = list(csv.DictReader(fh))
    else:
        with src.open(encoding="utf-8") as fh:
            raw = [json.loads(line) for line in fh if line.strip()]
    rows = []
    seen = set()
    for lineno, rec in enumerate(raw, start=1):
        arch_str = rec.get("arch") or rec.get("arch_str")
        if arch_str is None:
            raise TabularFormatError(src, lineno, "record has no 'arch' field")
        try:
            key = parse_nb201_arch_str(arch_str).key
        except SpaceError as e:
            raise TabularFormatError(src, lineno, str(e)) from None
        if key in seen:
            raise TabularFormatError(src, lineno, f"duplicate architecture {arch_str!r}")
        seen.add(key)
        valid = float(rec["valid_acc"]) * scale
        test = float(rec["test_acc"]) * scale
        for name, v in (("valid_acc", valid), ("test_acc", test)):
            _check_fraction(src, lineno, name, v)
        rows.append((key, valid, test))
    return write_tabular(dst, "nb201", rows, dataset=dataset, acc_env=acc_env)


# --- synthetic -------------------------------------------------------------

_MASK64 = (1 << 64) - 1
_UNARY_TABLE = 1
_PAIR_TABLE = 2


def splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def keyed_unit(seed: int, *parts: int) -> float:
    """Deterministic float in [0, 1) from a splitmix64 chain over (seed, parts)."""
    h = splitmix64(seed & _MASK64)
    for p in parts:
        h = splitmix64(h ^ (p & _MASK64))
    return (h >> 11) * (1.0 / (1 << 53))


@dataclasses.dataclass(frozen=True, eq=False)
class SyntheticLandscape:
    """Unary utilities per (edge, op) plus pair terms between consecutive edges."""

    seed: int
    E: int
    O: int
    unary: np.ndarray  # (E, O) in [-1, 1]
    pair: np.ndarray  # (E - 1, O, O) in [-0.3, 0.3]
    bias: float = 0.0  # added to every raw score

    @classmethod
    def generate(cls, seed: int, E: int, O: int) -> "SyntheticLandscape":
        u = np.empty((E, O))
        for e in range(E):
            for o in range(O):
                u[e, o] = -1.0 + 2.0 * keyed_unit(seed, _UNARY_TABLE, e, o)
        p = np.empty((max(E - 1, 0), O, O))
        for e in range(E - 1):
            for o in range(O):
                for o2 in range(O):
                    p[e, o, o2] = -0.3 + 0.6 * keyed_unit(seed, _PAIR_TABLE, e, o, o2)
        return cls(seed, E, O, u, p)

    def blend(self, other_seed: int, weight: float, bias: float = 0.0) -> "SyntheticLandscape":
        """A related landscape: convex mix with ``other_seed``'s tables plus a raw bias.

        Tables stay inside their ranges; ``bias`` shifts the accuracy level
        the way a harder dataset would.
        """
        other = SyntheticLandscape.generate(other_seed, self.E, self.O)
        return SyntheticLandscape(
            self.seed, self.E, self.O,
            (1.0 - weight) * self.unary + weight * other.unary,
            (1.0 - weight) * self.pair + weight * other.pair,
            self.bias + bias,
        )

    def raw(self, choices: np.ndarray) -> np.ndarray:
        """Raw score for a batch of op choices, shape (n, E)."""
        choices = np.atleast_2d(np.asarray(choices, dtype=np.intp))
        edges = np.arange(self.E)
        total = self.unary[edges, choices].sum(axis=1)
        if self.E > 1:
            total = total + self.pair[edges[:-1], choices[:, :-1], choices[:, 1:]].sum(axis=1)
        if self.bias:
            total = total + self.bias
        return total

    def acc(self, choices: np.ndarray) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.raw(choices)))


def synthetic_acc(landscape: SyntheticLandscape, arch: DiscreteArch) -> float:
    if len(arch.blocks) != 1 or arch.blocks[0].shape != (landscape.E, landscape.O):
        raise SpaceError("synthetic landscape needs a single E x O block")
    return float(landscape.acc(np.array([arch.ops(0)]))[0])


class SyntheticOracle(Oracle):
    """Validation and test accuracy are the same landscape value."""

    def __init__(self, landscape: SyntheticLandscape, space: SearchSpaceSpec | None = None,
                 acc_env: float | None = None):
        space = space or builtin_space("synthetic", landscape.E, landscape.O)
        b = space.blocks[0]
        if len(space.blocks) != 1 or b.discretizer != Discretizer.ROW_ARGMAX or b.shape != (landscape.E, landscape.O):
            raise SpaceError(f"space {space.name} does not fit a {landscape.E}x{landscape.O} landscape")
        super().__init__(space, {"dataset": f"synthetic-{landscape.seed}", "acc_env": acc_env})
        self.landscape = landscape

    @classmethod
    def from_seed(cls, seed: int, E: int = 6, O: int = 5, space=None, acc_env=None):
        return cls(SyntheticLandscape.generate(seed, E, O), space, acc_env)

    def _evaluate(self, arch, split):
        return synthetic_acc(self.landscape, arch)

    def all_choices(self) -> np.ndarray:
        E, O = self.landscape.E, self.landscape.O
        return np.indices((O,) * E).reshape(E, -1).T

    def max_acc(self) -> float:
        return float(self.landscape.acc(self.all_choices()).max())


# --- external evaluator ------------------------------------------------------


def eval_timeout_from_env() -> float:
    v = os.environ.get("L2NAS_EVAL_TIMEOUT_S")
    return float(v) if v else DEFAULT_EVAL_TIMEOUT_S


class _ProcessChannel:
    def __init__(self, command: Sequence[str] | str):
        if isinstance(command, str):
            command = shlex.split(command)
        self.proc = subprocess.Popen(
            list(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            text=True, encoding="utf-8", bufsize=1,
        )
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def send(self, line: str):
        try:
            self.proc.stdin.write(line)
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise ProtocolError(f"evaluator process is not accepting input: {e}") from None

    def recv(self, timeout: float) -> str | None:
        try:
            return self._lines.get(timeout=timeout)
        except queue.Empty:
            raise EvaluatorTimeout(f"no evaluator response within {timeout} s") from None

    def close(self):
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()


class _SocketChannel:
    def __init__(self, host: str, port: int):
        self.sock = socket.create_connection((host, port))
        self._rfile = self.sock.makefile("r", encoding="utf-8", newline="\n")

    def send(self, line: str):
        self.sock.sendall(line.encode("utf-8"))

    def recv(self, timeout: float) -> str | None:
        self.sock.settimeout(timeout)
        try:
            line = self._rfile.readline()
        except socket.timeout:
            raise EvaluatorTimeout(f"no evaluator response within {timeout} s") from None
        return line or None

    def close(self):
        self._rfile.close()
        self.sock.close()


def parse_response(line: str | None) -> float:
    if line is None:
        raise ProtocolError("evaluator closed the connection")
    text = line.rstrip("\r\n")
    if text.startswith("ERR"):
        raise EvaluatorError(text[3:].strip() or "unspecified evaluator failure")
    head, _, value = text.partition(" ")
    if head != "ACC":
        raise ProtocolError(f"malformed evaluator response {text!r}")
    try:
        acc = float(value)
    except ValueError:
        raise ProtocolError(f"malformed accuracy in response {text!r}") from None
    if not 0.0 <= acc <= 1.0 or math.isnan(acc):
        raise ProtocolError(f"evaluator accuracy {acc} outside [0, 1]")
    return acc


class ExternalOracle(Oracle):
    """Queries ``EVAL <arch_key>`` one at a time; both splits share the answer."""

    def __init__(self, space: SearchSpaceSpec, command=None, host: str | None = None,
                 port: int | None = None, timeout: float | None = None, metadata=None):
        super().__init__(space, metadata)
        if (command is None) == (host is None):
            raise ValueError("give exactly one of command or host/port")
        self.timeout = eval_timeout_from_env() if timeout is None else timeout
        self.channel = _ProcessChannel(command) if command is not None else _SocketChannel(host, port)
        self.requests_sent = 0
        self._io_lock = threading.Lock()

    def _evaluate(self, arch, split):
        if split == "test":
            return self.query(arch, "valid")
        with self._io_lock:
            self.channel.send(f"EVAL {arch.key}\n")
            self.requests_sent += 1
            return parse_response(self.channel.recv(self.timeout))

    def close(self):
        self.channel.close()


def external_query(oracle: ExternalOracle, arch: DiscreteArch) -> float:
    return oracle.query(arch, "valid")


# --- enumeration -----------------------------------------------------------


def enumerate_top(space: SearchSpaceSpec, oracle: Oracle, K: int, split: str = "valid",
                  cap: int = ENUMERATION_CAP) -> list[tuple[DiscreteArch, float]]:
    """Exact top-K by accuracy, ties broken by ascending arch key."""
    if space.size > cap:
        raise SpaceTooLarge(f"{space.name} has {space.size} architectures, cap is {cap}")
    if isinstance(oracle, SyntheticOracle):
        choices = oracle.all_choices()
        accs = oracle.landscape.acc(choices)
        k = min(K, len(accs))
        if k == 0:
            return []
        threshold = np.partition(accs, len(accs) - k)[len(accs) - k]
        candidates = []
        for idx in np.flatnonzero(accs >= threshold):
            m = np.zeros((oracle.landscape.E, oracle.landscape.O), dtype=np.int8)
            m[np.arange(oracle.landscape.E), choices[idx]] = 1
            candidates.append((DiscreteArch([m]), float(accs[idx])))
    else:
        candidates = [(a, oracle.query(a, split)) for a in iter_archs(space)]
    candidates.sort(key=lambda item: (-item[1], item[0].key))
    return candidates[:K]


def mean_matrix(archs: Sequence[DiscreteArch]) -> tuple[np.ndarray, ...]:
    n = len(archs)
    return tuple(
        np.sum([a.blocks[i] for a in archs], axis=0, dtype=np.int64) / n
        for i in range(len(archs[0].blocks))
    )
