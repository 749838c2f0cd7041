"""Classical and quantum oracle constructions with circuit bindings.

Every oracle carries a thread-safe query counter that increments exactly
once per classical evaluation or unitary application (a batched trajectory
application counts once per trajectory).  Table construction and other
internal bookkeeping never touch the counter.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np

from .bits import extract_field, spread_field
from .errors import CapacityError, UsageError
from .qsim import (
    DensityMatrix,
    OracleBinding,
    partial_trace_tensor,
)
from .seeding import rng_for

ORACLE_TABLE_CAP = 22  # max input bits for explicit truth tables
SIMON_TABLE_CAP = 12  # beyond this, the seeded-bijection construction
SHUFFLING_WIDTH_CAP = 20

_PAULI_1Q = {
    "I": np.eye(2, dtype=np.complex128),
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}


class QueryCounter:
    """Thread-safe query tally."""

    def __init__(self) -> None:
        self._count = 0
        self._lock = threading.Lock()

    def increment(self, by: int = 1) -> None:
        with self._lock:
            self._count += by

    def reset(self) -> None:
        with self._lock:
            self._count = 0

    @property
    def value(self) -> int:
        return self._count


# ---------------------------------------------------------------------------
# classical oracles
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class ClassicalOracle:
    """A total function {0,1}^n_in -> {0,1}^m_out over integer encodings."""

    n_in: int
    m_out: int
    fn: "callable"
    name: str = "oracle"
    fn_vec: "callable | None" = None
    query_counter: QueryCounter = field(default_factory=QueryCounter, repr=False)

    def __post_init__(self) -> None:
        if self.n_in < 1 or self.m_out < 1:
            raise UsageError("oracle arities must be positive")
        self._table: np.ndarray | None = None

    def _raw_eval(self, x: int) -> int:
        y = int(self.fn(int(x)))
        if not (0 <= y < 2**self.m_out):
            raise UsageError(f"oracle output {y} outside {self.m_out} bits")
        return y

    def evaluate(self, x: "int | str") -> int:
        """One counted classical query."""
        if isinstance(x, str):
            x = int(x, 2) if x else 0
        if not (0 <= x < 2**self.n_in):
            raise UsageError(f"input {x} outside {self.n_in} bits")
        self.query_counter.increment()
        return self._raw_eval(x)

    def table(self) -> np.ndarray:
        """Full truth table (uncounted; one unitary application is one query)."""
        if self._table is None:
            if self.n_in > ORACLE_TABLE_CAP:
                raise CapacityError(
                    f"truth table over {self.n_in} input bits exceeds cap {ORACLE_TABLE_CAP}"
                )
            xs = np.arange(2**self.n_in, dtype=np.int64)
            if self.fn_vec is not None:
                vals = np.asarray(self.fn_vec(xs), dtype=np.int64)
            else:
                vals = np.fromiter((self._raw_eval(int(x)) for x in xs), dtype=np.int64)
            if vals.min() < 0 or vals.max() >= 2**self.m_out:
                raise UsageError("oracle table value outside output range")
            self._table = vals
        return self._table


class XorOracleBinding(OracleBinding):
    """U_O |x>|y> = |x>|y xor O(x)>: a basis permutation, self-inverse."""

    is_unitary = True

    def __init__(self, oracle: ClassicalOracle):
        self.oracle = oracle
        self.n_wires = oracle.n_in + oracle.m_out
        self._perms: dict[tuple, np.ndarray] = {}

    def _perm(self, wires: tuple[int, ...], n_qubits: int) -> np.ndarray:
        key = (wires, n_qubits)
        if key not in self._perms:
            if len(wires) != self.n_wires:
                raise UsageError(
                    f"oracle {self.oracle.name} needs {self.n_wires} wires, got {len(wires)}"
                )
            idx = np.arange(2**n_qubits, dtype=np.int64)
            x = extract_field(idx, wires[: self.oracle.n_in], n_qubits)
            fy = self.oracle.table()[x]
            self._perms[key] = idx ^ spread_field(fy, wires[self.oracle.n_in :], n_qubits)
        return self._perms[key]

    def apply_statevector(self, tensor: np.ndarray, wires, n_qubits: int) -> np.ndarray:
        perm = self._perm(tuple(wires), n_qubits)
        batched = tensor.ndim == n_qubits + 1
        self.oracle.query_counter.increment(tensor.shape[0] if batched else 1)
        flat = tensor.reshape(-1, 2**n_qubits) if batched else tensor.reshape(1, -1)
        out = flat[:, perm]
        return out.reshape(tensor.shape)

    def apply_density(self, tensor: np.ndarray, wires, n_qubits: int) -> np.ndarray:
        perm = self._perm(tuple(wires), n_qubits)
        self.oracle.query_counter.increment()
        rho = tensor.reshape(2**n_qubits, 2**n_qubits)
        return rho[perm][:, perm].reshape(tensor.shape)


def lift_to_unitary(oracle: ClassicalOracle) -> XorOracleBinding:
    """Circuit-applicable form of the XOR lifting of a classical oracle."""
    return XorOracleBinding(oracle)


# ---------------------------------------------------------------------------
# oracle families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimonSpec:
    """Period-s instance family; s = 0^n selects the 1-to-1 case."""

    n: int
    s: str
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.s) != self.n or set(self.s) - {"0", "1"}:
            raise UsageError(f"secret must be an {self.n}-bit string")

    @property
    def s_int(self) -> int:
        return int(self.s, 2)


def _mix_rounds(rng: np.random.Generator, n: int, rounds: int = 4):
    mask = 2**n - 1
    params = [
        (int(rng.integers(0, 2**n)) | 1, int(rng.integers(1, max(2, n))), int(rng.integers(0, 2**n)))
        for _ in range(rounds)
    ]

    def mix(x):
        # each round is a bijection on n bits: odd multiply, xorshift, add
        for a, sh, c in params:
            x = (x * a) & mask
            x = x ^ (x >> sh)
            x = (x + c) & mask
        return x

    return mix


def make_simon(spec: SimonSpec) -> ClassicalOracle:
    """f(x) = f(x xor s), injective on pair representatives.

    Small n uses an explicit shuffled table (exhaustively checkable); larger
    n composes seeded bijective mixing rounds so no 2^n table is stored.
    """
    n, s = spec.n, spec.s_int
    if n <= SIMON_TABLE_CAP:
        rng = rng_for(spec.seed, 0x51)
        if s == 0:
            table = rng.permutation(2**n).astype(np.int64)
        else:
            images = rng.permutation(2**n).astype(np.int64)
            table = np.empty(2**n, dtype=np.int64)
            class_of: dict[int, int] = {}
            for x in range(2**n):
                rep = min(x, x ^ s)
                if rep not in class_of:
                    class_of[rep] = len(class_of)
                table[x] = images[class_of[rep]]
        return ClassicalOracle(
            n, n, lambda x: int(table[x]), f"simon-{spec.s}", fn_vec=lambda xs: table[xs]
        )
    mix = _mix_rounds(rng_for(spec.seed, 0x52), n)

    def fn(x: int) -> int:
        return mix(min(x, x ^ s))

    def fn_vec(xs: np.ndarray) -> np.ndarray:
        return mix(np.minimum(xs, xs ^ s))

    return ClassicalOracle(n, n, fn, f"simon-{spec.s}", fn_vec=fn_vec)


def make_bv(s: str) -> ClassicalOracle:
    """f(x) = <x, s> mod 2."""
    n = len(s)
    if n < 1 or set(s) - {"0", "1"}:
        raise UsageError("secret must be a nonempty bitstring")
    s_int = int(s, 2)

    def fn(x: int) -> int:
        return (x & s_int).bit_count() & 1

    def fn_vec(xs: np.ndarray) -> np.ndarray:
        return np.bitwise_count(np.int64(xs) & s_int).astype(np.int64) & 1

    return ClassicalOracle(n, 1, fn, f"bv-{s}", fn_vec=fn_vec)


def make_lifted_simon(f: ClassicalOracle) -> ClassicalOracle:
    """f~: {0,1}^{2n} -> {0,1}^n agreeing with f on x || 0^n, else 0^n."""
    if f.n_in != f.m_out:
        raise UsageError("lifting needs n_in == m_out")
    n = f.n_in
    mask = 2**n - 1

    def fn(x: int) -> int:
        return f._raw_eval(x >> n) if (x & mask) == 0 else 0

    def fn_vec(xs: np.ndarray) -> np.ndarray:
        return np.where((xs & mask) == 0, f.table()[xs >> n], 0)

    return ClassicalOracle(2 * n, n, fn, f"lifted-{f.name}", fn_vec=fn_vec)


# ---------------------------------------------------------------------------
# Grover phase oracle
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class GroverOracle:
    """Phase oracle over a search domain; marked = 0 is the identity oracle.

    The domain {0, ..., n_search - 1} maps straight onto basis states of
    ceil(log2 n_search) wires; non-power-of-two domains leave the upper
    basis states as never-marked padding.  Index 0 doubles as the "no mark"
    oracle, so markable elements are 1 .. n_search - 1.
    """

    n_search: int
    marked: int
    query_counter: QueryCounter = field(default_factory=QueryCounter, repr=False)

    def __post_init__(self) -> None:
        if self.n_search < 2:
            raise UsageError("search domain needs at least 2 elements")
        if not (0 <= self.marked < self.n_search):
            raise UsageError(
                f"marked index {self.marked} outside [0, {self.n_search})"
            )

    @property
    def n_wires(self) -> int:
        return max(1, math.ceil(math.log2(self.n_search)))


class GroverPhaseBinding(OracleBinding):
    """Diagonal +-1 unitary: negates the marked basis state of the register."""

    is_unitary = True

    def __init__(self, oracle: GroverOracle):
        self.oracle = oracle
        self.n_wires = oracle.n_wires
        self._masks: dict[tuple, np.ndarray] = {}

    def _mask(self, wires: tuple[int, ...], n_qubits: int) -> np.ndarray:
        key = (wires, n_qubits)
        if key not in self._masks:
            idx = np.arange(2**n_qubits, dtype=np.int64)
            self._masks[key] = extract_field(idx, wires, n_qubits) == self.oracle.marked
        return self._masks[key]

    def apply_statevector(self, tensor: np.ndarray, wires, n_qubits: int) -> np.ndarray:
        batched = tensor.ndim == n_qubits + 1
        self.oracle.query_counter.increment(tensor.shape[0] if batched else 1)
        if self.oracle.marked == 0:
            return tensor
        mask = self._mask(tuple(wires), n_qubits)
        flat = (tensor.reshape(-1, 2**n_qubits) if batched else tensor.reshape(1, -1)).copy()
        flat[:, mask] *= -1.0
        return flat.reshape(tensor.shape)

    def apply_density(self, tensor: np.ndarray, wires, n_qubits: int) -> np.ndarray:
        self.oracle.query_counter.increment()
        if self.oracle.marked == 0:
            return tensor
        mask = self._mask(tuple(wires), n_qubits)
        rho = tensor.reshape(2**n_qubits, 2**n_qubits).copy()
        rho[mask, :] *= -1.0
        rho[:, mask] *= -1.0
        return rho.reshape(tensor.shape)


def make_grover_phase(oracle: GroverOracle) -> GroverPhaseBinding:
    return GroverPhaseBinding(oracle)


# ---------------------------------------------------------------------------
# state oracle
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class StateOracle:
    """Prepares rho = (I + coeff * P) / 2^n in the state register.

    coeff = 0 (or pauli None) is the maximally mixed state; coeff = 1 adds
    one Pauli-string correlation P.  Both are PSD with trace 1.
    """

    n: int
    pauli: str | None = None
    coeff: int = 0
    query_counter: QueryCounter = field(default_factory=QueryCounter, repr=False)

    def __post_init__(self) -> None:
        if self.n < 1:
            raise UsageError("state register needs at least 1 qubit")
        if self.coeff not in (0, 1):
            raise UsageError("coeff must be 0 or 1")
        if self.pauli is not None:
            if len(self.pauli) != self.n or set(self.pauli) - set("IXYZ"):
                raise UsageError(f"pauli must be an {self.n}-letter IXYZ string")

    @property
    def pauli_weight(self) -> int:
        return 0 if self.pauli is None else sum(c != "I" for c in self.pauli)

    def density(self) -> np.ndarray:
        dim = 2**self.n
        rho = np.eye(dim, dtype=np.complex128)
        if self.coeff and self.pauli is not None:
            p = np.array([[1.0]], dtype=np.complex128)
            for c in self.pauli:
                p = np.kron(p, _PAULI_1Q[c])
            rho = rho + p
        return rho / dim


def _replace_register(
    tensor: np.ndarray, n: int, positions: tuple[int, ...], rho: np.ndarray
) -> np.ndarray:
    """Trace out `positions` and tensor rho back in at those positions."""
    m = len(positions)
    keep = sorted(set(range(n)) - set(positions))
    rho_t = rho.reshape((2,) * (2 * m))
    if keep:
        marg = partial_trace_tensor(tensor, n, keep)
        full = np.multiply.outer(rho_t, marg)
        dests = (
            list(positions)
            + [n + p for p in positions]
            + keep
            + [n + q for q in keep]
        )
    else:
        full = rho_t
        dests = list(positions) + [n + p for p in positions]
    full = np.moveaxis(full, list(range(len(dests))), dests)
    return full.reshape((2,) * (2 * n))


def apply_state_oracle(sigma: DensityMatrix, so: StateOracle, state_register) -> DensityMatrix:
    """O_rho: replace the state register with rho, keep the work marginal.

    `state_register` is a SubsetSelector or iterable of positions; rho's
    qubit j lands on the j-th smallest selected position.
    """
    subset = getattr(state_register, "subset", state_register)
    positions = tuple(sorted(int(q) for q in subset))
    if len(positions) != so.n:
        raise UsageError(f"state register has {len(positions)} qubits, oracle needs {so.n}")
    if positions and not (0 <= positions[0] and positions[-1] < sigma.n_qubits):
        raise UsageError("state register outside the register range")
    so.query_counter.increment()
    out = _replace_register(sigma.tensor(), sigma.n_qubits, positions, so.density())
    n = sigma.n_qubits
    return DensityMatrix(n, out.reshape(2**n, 2**n), check_psd=False)


class StateOracleBinding(OracleBinding):
    """Density-only binding: trajectories cannot host a state-replacement."""

    is_unitary = False

    def __init__(self, oracle: StateOracle):
        self.oracle = oracle
        self.n_wires = oracle.n

    def apply_statevector(self, tensor, wires, n_qubits):
        raise UsageError("state oracles require the density backend")

    def apply_density(self, tensor: np.ndarray, wires, n_qubits: int) -> np.ndarray:
        self.oracle.query_counter.increment()
        return _replace_register(tensor, n_qubits, tuple(wires), self.oracle.density())


# ---------------------------------------------------------------------------
# shuffling oracle
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class ShufflingOracle:
    """Levels f_0..f_{d-1} are seeded bijections of {0,1}^W, W = (d+2) n.

    S_d is the image of the lexicographically first 2^n strings under the
    composition f_{d-1} o ... o f_0; the final level f_d returns the base
    function's (zero-padded) value on S_d and the all-zero string elsewhere.
    Levels are sampled on first access.
    """

    base: ClassicalOracle
    depth: int
    seed: int = 0
    query_counter: QueryCounter = field(default_factory=QueryCounter, repr=False)

    def __post_init__(self) -> None:
        if self.base.n_in != self.base.m_out:
            raise UsageError("shuffling base must have n_in == m_out")
        if self.depth < 1:
            raise UsageError("depth must be >= 1")
        if self.width > SHUFFLING_WIDTH_CAP:
            raise CapacityError(
                f"shuffling width {self.width} exceeds cap {SHUFFLING_WIDTH_CAP}"
            )
        self._levels: list[np.ndarray] | None = None
        self._final: np.ndarray | None = None
        self._image: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.base.n_in

    @property
    def width(self) -> int:
        return (self.depth + 2) * self.n

    @property
    def tag_bits(self) -> int:
        return max(1, math.ceil(math.log2(self.depth + 1)))

    @property
    def n_register_qubits(self) -> int:
        return self.tag_bits + 2 * self.width

    def levels(self) -> list[np.ndarray]:
        if self._levels is None:
            self._levels = [
                rng_for(self.seed, 0x5F, i).permutation(2**self.width).astype(np.int64)
                for i in range(self.depth)
            ]
        return self._levels

    def s_d(self) -> np.ndarray:
        """Image of the first 2^n strings (zero-padded) under the composition."""
        if self._image is None:
            cur = np.arange(2**self.n, dtype=np.int64)
            for lvl in self.levels():
                cur = lvl[cur]
            self._image = cur
        return self._image

    def final_table(self) -> np.ndarray:
        if self._final is None:
            table = np.zeros(2**self.width, dtype=np.int64)
            table[self.s_d()] = self.base.table()
            self._final = table
        return self._final

    def evaluate(self, level: int, x: int) -> int:
        """One counted classical query to f_level."""
        if not (0 <= level <= self.depth):
            raise UsageError(f"level {level} outside [0, {self.depth}]")
        if not (0 <= x < 2**self.width):
            raise UsageError(f"input {x} outside {self.width} bits")
        self.query_counter.increment()
        if level < self.depth:
            return int(self.levels()[level][x])
        return int(self.final_table()[x])


class ShufflingBinding(OracleBinding):
    """|i, x>|y> -> |i, x>|y xor f_i(x)>; tags beyond d act as identity."""

    is_unitary = True

    def __init__(self, oracle: ShufflingOracle):
        self.oracle = oracle
        self.n_wires = oracle.n_register_qubits
        self._perm_cache: dict[tuple, np.ndarray] = {}

    def _own_perm(self) -> np.ndarray:
        o = self.oracle
        w, t = o.width, o.tag_bits
        r = np.arange(2 ** (t + 2 * w), dtype=np.int64)
        tag = r >> (2 * w)
        x = (r >> w) & (2**w - 1)
        stack = np.zeros((2**t, 2**w), dtype=np.int64)
        for i, lvl in enumerate(o.levels()):
            stack[i] = lvl
        stack[o.depth] = o.final_table()
        return r ^ stack[tag, x]

    def _perm(self, wires: tuple[int, ...], n_qubits: int) -> np.ndarray:
        key = (wires, n_qubits)
        if key not in self._perm_cache:
            own = self._own_perm()
            idx = np.arange(2**n_qubits, dtype=np.int64)
            reg = extract_field(idx, wires, n_qubits)
            moved = own[reg]
            self._perm_cache[key] = (
                idx ^ spread_field(reg ^ moved, wires, n_qubits)
            )
        return self._perm_cache[key]

    def apply_statevector(self, tensor: np.ndarray, wires, n_qubits: int) -> np.ndarray:
        perm = self._perm(tuple(wires), n_qubits)
        batched = tensor.ndim == n_qubits + 1
        self.oracle.query_counter.increment(tensor.shape[0] if batched else 1)
        flat = tensor.reshape(-1, 2**n_qubits) if batched else tensor.reshape(1, -1)
        return flat[:, perm].reshape(tensor.shape)

    def apply_density(self, tensor: np.ndarray, wires, n_qubits: int) -> np.ndarray:
        perm = self._perm(tuple(wires), n_qubits)
        self.oracle.query_counter.increment()
        rho = tensor.reshape(2**n_qubits, 2**n_qubits)
        return rho[perm][:, perm].reshape(tensor.shape)


def make_shuffling(f: ClassicalOracle, d: int, seed: int = 0) -> ShufflingOracle:
    return ShufflingOracle(f, d, seed)


def shuffling_channel(
    sigma: DensityMatrix, f: ClassicalOracle, d: int, k_samples: int = 64, seed: int = 0
) -> tuple[DensityMatrix, dict]:
    """Mixture over k_samples fresh shuffling draws, each conjugated exactly.

    The true channel averages over all bijection tuples; that support is far
    too large, so a fixed K approximates it (K is echoed in the info dict).
    """
    from .qsim import DENSITY_QUBIT_CAP

    probe = ShufflingOracle(f, d, seed=0)
    n_reg = probe.n_register_qubits
    if n_reg > DENSITY_QUBIT_CAP:
        raise CapacityError(
            f"shuffling channel needs {n_reg} register qubits, cap {DENSITY_QUBIT_CAP}"
        )
    if sigma.n_qubits != n_reg:
        raise UsageError(f"state must cover {n_reg} register qubits")
    if k_samples < 1:
        raise UsageError("k_samples must be positive")
    dim = 2**n_reg
    acc = np.zeros((dim, dim), dtype=np.complex128)
    rho = sigma.entries
    for k in range(k_samples):
        oracle = ShufflingOracle(f, d, seed=int(rng_for(seed, 0x5D, k).integers(0, 2**62)))
        perm_idx = ShufflingBinding(oracle)._own_perm()
        acc += rho[perm_idx][:, perm_idx]
    out = DensityMatrix(n_reg, acc / k_samples, check_psd=False)
    return out, {"k_samples": k_samples, "register_qubits": n_reg, "depth": d}
