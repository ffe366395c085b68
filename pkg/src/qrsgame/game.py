"""Payoff evaluation for the steering game, exact and sampled.

One round: the referee draws a key (j, s) uniformly from the six settings,
announces j to Alice and sends Bob the referee state for (j, s). Alice
replies with a sign a, Bob with a bit b. The payoff averages, per setting,

    scale * sum_(j,s) [ g(j,s) <a b> - penalty(j,s) <b> ]

where the canonical instance uses g = s, penalty weight r/sqrt(3) and
scale 2, so a correct correlated click is rewarded and every click is
taxed in proportion to r. Only per-setting conditional averages enter, so
the evaluation is independent of the referee's (uniform) key distribution.

The generic structure is kept as a coefficient table over (row, key)
pairs: rows in ``alice_inputs`` multiply the reported product <a b> for
their own key, rows in ``constant_outputs`` contribute a fixed output
value times <b>. The canonical game is the six-key table with g = s plus
one constant row holding -r/sqrt(3).

Strategies come in three shapes. HonestQuantum shares a two-qubit state
and lets Bob project his half together with the referee qubit onto a
partial Bell-state analyzer. LhsDeterministic fixes Alice's answers and
gives Bob only a local hidden qubit to combine with the referee state.
CustomLocal mixes arbitrary local response tables with arbitrary effects
on the referee qubit; it is the fuzzing family used by the adversarial
tests. All functions are pure and every random draw is made from an
explicit per-setting substream of the caller's seed, so results never
depend on scheduling or thread count.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .qmath import (
    HERMITIAN_TOL,
    PSD_TOL,
    bloch_to_density,
    eig_hermitian,
    hermiticity_defect,
    identity,
    is_density_matrix,
    partial_trace,
    pauli,
    real_trace_product,
    tensor,
)
from .states import SETTING_KEYS, BellIndex, RefereeEnsemble, bell_state, referee_state

SQRT3 = math.sqrt(3.0)

_CELLS = ((1, 1), (1, 0), (-1, 1), (-1, 0))


@dataclass
class BinaryPovm:
    """Two-outcome POVM {b0, b1} on the Bob + referee pair."""

    b0: np.ndarray
    b1: np.ndarray

    def __post_init__(self) -> None:
        self.b0 = np.asarray(self.b0, dtype=complex)
        self.b1 = np.asarray(self.b1, dtype=complex)
        for name, el in (("b0", self.b0), ("b1", self.b1)):
            if el.shape != (4, 4):
                raise ValueError(f"POVM element {name} must be 4x4, got {el.shape}")
            if hermiticity_defect(el) > HERMITIAN_TOL:
                raise ValueError(f"POVM element {name} is not Hermitian")
            if eig_hermitian(el)[-1] < -PSD_TOL:
                raise ValueError(f"POVM element {name} is not positive semidefinite")
        if np.max(np.abs(self.b0 + self.b1 - identity(4))) > HERMITIAN_TOL:
            raise ValueError("POVM elements must sum to the identity")


def singlet_projector_bc() -> BinaryPovm:
    """Ideal analyzer: b1 projects the Bob + referee pair onto |Psi->."""
    b1 = bell_state(BellIndex.PSI_MINUS)
    return BinaryPovm(identity(4) - b1, b1)


def partial_bsm_povm(visibility: float) -> BinaryPovm:
    """Analyzer with interference visibility v: b1 = v |Psi-><Psi-| + (1-v)/2.

    At v = 1 this is the ideal projector; at v = 0 the photons are fully
    distinguishable and every input clicks with probability 1/2.
    """
    if not 0.0 <= visibility <= 1.0:
        raise ValueError(f"visibility must lie in [0, 1], got {visibility}")
    b1 = visibility * bell_state(BellIndex.PSI_MINUS) + (1.0 - visibility) * identity(4) / 2.0
    return BinaryPovm(identity(4) - b1, b1)


@dataclass
class HonestQuantum:
    """Shared two-qubit state; Alice measures sigma_j, Bob runs the analyzer."""

    shared_state: np.ndarray
    bob_povm: BinaryPovm

    def __post_init__(self) -> None:
        self.shared_state = np.asarray(self.shared_state, dtype=complex)
        check = is_density_matrix(self.shared_state)
        if not check:
            raise ValueError(
                "shared_state is not a density matrix "
                f"(hermiticity {check.hermiticity:.2e}, trace error "
                f"{check.trace_error:.2e}, min eigenvalue {check.min_eigenvalue:.2e})"
            )


@dataclass
class LhsDeterministic:
    """Fixed Alice signs plus a local hidden qubit on Bob's side.

    Bob holds ``hidden_state`` (a Bloch vector) instead of half of an
    entangled pair and measures ``bob_povm`` on hidden qubit + referee
    qubit. His response to any referee state is therefore governed by the
    induced effect on the referee qubit alone, computed once here.
    """

    alice_signs: tuple[int, int, int]
    hidden_state: np.ndarray
    bob_povm: BinaryPovm
    effect: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.alice_signs = tuple(int(a) for a in self.alice_signs)
        if len(self.alice_signs) != 3 or any(a not in (-1, 1) for a in self.alice_signs):
            raise ValueError(f"alice_signs must be three values of +/-1, got {self.alice_signs}")
        rho = bloch_to_density(self.hidden_state)
        self.hidden_state = np.asarray(self.hidden_state, dtype=float)
        self.effect = partial_trace(tensor(rho, identity(2)) @ self.bob_povm.b1, "first")


@dataclass
class LocalComponent:
    """One hidden variable: Alice's response table plus Bob's referee effect."""

    weight: float
    alice_plus: dict[int, float]
    effect: np.ndarray

    def __post_init__(self) -> None:
        if self.weight < 0.0:
            raise ValueError(f"component weight must be nonnegative, got {self.weight}")
        if set(self.alice_plus) != {1, 2, 3}:
            raise ValueError("alice_plus must map each input j in {1, 2, 3}")
        for j, p in self.alice_plus.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"alice_plus[{j}] = {p} is not a probability")
        self.effect = np.asarray(self.effect, dtype=complex)
        if self.effect.shape != (2, 2):
            raise ValueError("component effect must be a 2x2 operator")
        if hermiticity_defect(self.effect) > HERMITIAN_TOL:
            raise ValueError("component effect is not Hermitian")
        eigs = eig_hermitian(self.effect)
        if eigs[-1] < -PSD_TOL or eigs[0] > 1.0 + PSD_TOL:
            raise ValueError("component effect must satisfy 0 <= E <= 1")


@dataclass
class CustomLocal:
    """Mixture of local response tables; the general no-steering adversary."""

    components: tuple[LocalComponent, ...]

    def __post_init__(self) -> None:
        self.components = tuple(self.components)
        if not self.components:
            raise ValueError("CustomLocal needs at least one component")
        total = sum(c.weight for c in self.components)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"component weights must sum to 1, got {total}")


Strategy = HonestQuantum | LhsDeterministic | CustomLocal


@dataclass
class GameSpec:
    """Coefficient table defining one instance of the steering game."""

    alice_inputs: tuple[int, ...]
    referee_keys: tuple[tuple[int, int], ...]
    coefficients: dict[tuple[int, tuple[int, int]], float]
    r: float
    payoff_scale: float
    constant_outputs: dict[int, float]

    def __post_init__(self) -> None:
        if self.r < 0.0:
            raise ValueError(f"penalty rate r must be nonnegative, got {self.r}")
        if len(set(self.referee_keys)) != len(self.referee_keys):
            raise ValueError("referee_keys contains duplicates")
        keys = set(self.referee_keys)
        reported = set(self.alice_inputs)
        if reported & set(self.constant_outputs):
            raise ValueError("a row cannot be both reported and constant")
        for (row, key), g in self.coefficients.items():
            if key not in keys:
                raise ValueError(f"coefficient references unknown key {key}")
            if row in reported:
                if row != key[0]:
                    raise ValueError(
                        f"reported row {row} can only weight its own key, got {key}"
                    )
            elif row not in self.constant_outputs:
                raise ValueError(f"coefficient references unknown row {row}")
            float(g)


def canonical_game(r: float) -> GameSpec:
    """Six-key game with g = s, constant row -r/sqrt(3), overall scale 2."""
    coefficients: dict[tuple[int, tuple[int, int]], float] = {}
    for j, s in SETTING_KEYS:
        coefficients[(j, (j, s))] = float(s)
        coefficients[(0, (j, s))] = 1.0
    return GameSpec(
        alice_inputs=(1, 2, 3),
        referee_keys=SETTING_KEYS,
        coefficients=coefficients,
        r=float(r),
        payoff_scale=2.0,
        constant_outputs={0: -float(r) / SQRT3},
    )


def is_canonical(spec: GameSpec) -> bool:
    """True iff spec is exactly canonical_game(spec.r)."""
    if tuple(sorted(spec.alice_inputs)) != (1, 2, 3):
        return False
    if set(spec.referee_keys) != set(SETTING_KEYS):
        return False
    if spec.payoff_scale != 2.0 or set(spec.constant_outputs) != {0}:
        return False
    if abs(spec.constant_outputs[0] + spec.r / SQRT3) > 1e-12:
        return False
    expected = canonical_game(spec.r).coefficients
    return spec.coefficients == expected


def _joint_honest(strategy: HonestQuantum, omega: np.ndarray, j: int) -> dict:
    probs = {}
    for a in (1, -1):
        proj = 0.5 * (identity(2) + a * pauli(j))
        # Unnormalized Bob state after Alice's outcome a; its trace is p(a).
        cond = partial_trace(tensor(proj, identity(2)) @ strategy.shared_state, "first")
        p_a = float(np.trace(cond).real)
        p_click = real_trace_product(tensor(cond, omega), strategy.bob_povm.b1)
        probs[(a, 1)] = p_click
        probs[(a, 0)] = p_a - p_click
    return probs


def _joint_lhs(strategy: LhsDeterministic, omega: np.ndarray, j: int) -> dict:
    q = real_trace_product(omega, strategy.effect)
    a = strategy.alice_signs[j - 1]
    return {(a, 1): q, (a, 0): 1.0 - q, (-a, 1): 0.0, (-a, 0): 0.0}


def _joint_custom(strategy: CustomLocal, omega: np.ndarray, j: int) -> dict:
    probs = {cell: 0.0 for cell in _CELLS}
    for comp in strategy.components:
        q = real_trace_product(omega, comp.effect)
        p_plus = comp.alice_plus[j]
        for a, p_a in ((1, p_plus), (-1, 1.0 - p_plus)):
            probs[(a, 1)] += comp.weight * p_a * q
            probs[(a, 0)] += comp.weight * p_a * (1.0 - q)
    return probs


def joint_probabilities(
    strategy: Strategy, ensemble: RefereeEnsemble, j: int, s: int
) -> dict[tuple[int, int], float]:
    """p(a, b) for one setting, as a dict over the four (a, b) cells."""
    omega = referee_state(ensemble, j, s)
    if isinstance(strategy, HonestQuantum):
        return _joint_honest(strategy, omega, j)
    if isinstance(strategy, LhsDeterministic):
        return _joint_lhs(strategy, omega, j)
    if isinstance(strategy, CustomLocal):
        return _joint_custom(strategy, omega, j)
    raise ValueError(f"unknown strategy type {type(strategy).__name__}")


def _setting_moments(probs: dict[tuple[int, int], float]) -> tuple[float, float]:
    m_ab = probs[(1, 1)] - probs[(-1, 1)]
    m_b = probs[(1, 1)] + probs[(-1, 1)]
    return m_ab, m_b


def exact_payoff(spec: GameSpec, strategy: Strategy, ensemble: RefereeEnsemble) -> float:
    """Expected payoff of a strategy, from exact joint probabilities."""
    value = 0.0
    for key in spec.referee_keys:
        m_ab, m_b = _setting_moments(joint_probabilities(strategy, ensemble, *key))
        g_rep = spec.coefficients.get((key[0], key), 0.0)
        value += g_rep * m_ab
        for row, a_const in spec.constant_outputs.items():
            g = spec.coefficients.get((row, key), 0.0)
            value += g * a_const * m_b
    return spec.payoff_scale * value


@dataclass
class TallyTable:
    """Integer counts per (j, s, a, b) cell; zero cells may be omitted."""

    counts: dict[tuple[int, int, int, int], int]

    def __post_init__(self) -> None:
        clean = {}
        for cell, n in self.counts.items():
            j, s, a, b = cell
            if (j, s) not in SETTING_KEYS or a not in (-1, 1) or b not in (0, 1):
                raise ValueError(f"malformed tally cell {cell}")
            n = int(n)
            if n < 0:
                raise ValueError(f"negative count {n} for cell {cell}")
            if n:
                clean[(j, s, a, b)] = n
        self.counts = clean

    def cell(self, j: int, s: int, a: int, b: int) -> int:
        return self.counts.get((j, s, a, b), 0)

    def total(self, j: int, s: int) -> int:
        return sum(self.cell(j, s, a, b) for a, b in _CELLS)

    def merged(self, other: "TallyTable") -> "TallyTable":
        out = dict(self.counts)
        for cell, n in other.counts.items():
            out[cell] = out.get(cell, 0) + n
        return TallyTable(out)


def simulate_runs(
    spec: GameSpec,
    strategy: Strategy,
    ensemble: RefereeEnsemble,
    n_per_setting: int,
    seed: int,
) -> TallyTable:
    """Sample n_per_setting rounds of every setting into a tally.

    Each setting draws from its own substream seeded by (seed, j, s), so
    the tally is reproducible no matter how the settings are scheduled.
    """
    if n_per_setting < 1:
        raise ValueError(f"n_per_setting must be at least 1, got {n_per_setting}")
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    counts: dict[tuple[int, int, int, int], int] = {}
    for j, s in spec.referee_keys:
        probs = joint_probabilities(strategy, ensemble, j, s)
        p = np.array([max(probs[cell], 0.0) for cell in _CELLS])
        p /= p.sum()
        rng = np.random.default_rng(np.random.SeedSequence([seed, j, 0 if s > 0 else 1]))
        draw = rng.multinomial(n_per_setting, p)
        for cell, n in zip(_CELLS, draw):
            if n:
                counts[(j, s) + cell] = int(n)
    return TallyTable(counts)


@dataclass
class PayoffEstimate:
    """Empirical payoff with a first-order multinomial standard error."""

    value: float
    stderr: float
    n_per_setting: dict[tuple[int, int], int]

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "stderr": self.stderr,
            "n_per_setting": [
                {"j": j, "s": s, "n": self.n_per_setting[(j, s)]}
                for j, s in sorted(self.n_per_setting, key=SETTING_KEYS.index)
            ],
        }


def estimate_payoff(spec: GameSpec, tally: TallyTable) -> PayoffEstimate:
    """Plug-in payoff estimate from a tally, with propagated standard error.

    Every setting contributes a linear form in its click frequencies, so
    the variance is the exact multinomial covariance evaluated at the
    observed frequencies, and settings add independently.
    """
    value = 0.0
    variance = 0.0
    totals = {}
    for key in spec.referee_keys:
        j, s = key
        n = tally.total(j, s)
        if n == 0:
            raise ValueError(f"tally has no runs for setting (j={j}, s={s})")
        totals[key] = n
        g_rep = spec.coefficients.get((key[0], key), 0.0)
        g_const = sum(
            spec.coefficients.get((row, key), 0.0) * a_const
            for row, a_const in spec.constant_outputs.items()
        )
        w = {a: g_rep * a + g_const for a in (1, -1)}
        f = {a: tally.cell(j, s, a, 1) / n for a in (1, -1)}
        value += w[1] * f[1] + w[-1] * f[-1]
        variance += (
            w[1] ** 2 * f[1] * (1.0 - f[1])
            + w[-1] ** 2 * f[-1] * (1.0 - f[-1])
            - 2.0 * w[1] * w[-1] * f[1] * f[-1]
        ) / n
    scale = spec.payoff_scale
    return PayoffEstimate(scale * value, scale * math.sqrt(variance), totals)


def lhs_best_deterministic(
    spec: GameSpec, ensemble: RefereeEnsemble
) -> tuple[tuple[int, int, int], np.ndarray, float]:
    """Best deterministic no-steering strategy against the canonical game.

    Returns (alice signs, optimal referee-side Bloch direction, payoff).
    The payoff is the top witness eigenvalue, i.e. the value reached when
    Bob projects onto the optimal direction at full strength. Ties pick
    the lexicographically smallest sign assignment.
    """
    if not is_canonical(spec):
        raise ValueError("lhs_best_deterministic requires the canonical game structure")
    from .witness import assignment_vectors, t_operator

    best: tuple[tuple[int, int, int], np.ndarray, float] | None = None
    for a1 in (-1, 1):
        for a2 in (-1, 1):
            for a3 in (-1, 1):
                a = (a1, a2, a3)
                payoff = float(eig_hermitian(t_operator(ensemble, a, spec.r))[0])
                if best is None or payoff > best[2] + 1e-15:
                    vec_a, vec_b = assignment_vectors(ensemble, a)
                    t = vec_a - spec.r * vec_b
                    norm = float(np.linalg.norm(t))
                    direction = t / norm if norm > 1e-15 else np.zeros(3)
                    best = (a, direction, payoff)
    assert best is not None
    return best


def realize_lhs_best(spec: GameSpec, ensemble: RefereeEnsemble) -> LhsDeterministic:
    """Build the explicit strategy that attains lhs_best_deterministic.

    The optimal analyzer is a rank-one projector aimed at the optimal
    referee-side direction, carried by a matching pure hidden qubit so the
    induced effect has full strength. When the witness is direction-free
    any unit vector realizes the optimum.
    """
    signs, direction, _ = lhs_best_deterministic(spec, ensemble)
    if np.linalg.norm(direction) < 0.5:
        direction = np.array([0.0, 0.0, 1.0])
    b1 = tensor(bloch_to_density(direction), bloch_to_density(direction))
    povm = BinaryPovm(identity(4) - b1, b1)
    return LhsDeterministic(signs, direction, povm)


def random_lhs_strategy(rng: np.random.Generator) -> LhsDeterministic:
    """Random deterministic adversary: signs, hidden qubit and analyzer."""
    signs = tuple(int(x) for x in rng.integers(0, 2, size=3) * 2 - 1)
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    hidden = direction * rng.random() ** (1.0 / 3.0)
    if rng.random() < 0.5:
        # Rank-one analyzer aimed at a random referee-side direction.
        target = rng.normal(size=3)
        target /= np.linalg.norm(target)
        b1 = tensor(bloch_to_density(direction), bloch_to_density(target))
    else:
        g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        s = g.conj().T @ g
        b1 = rng.random() * s / eig_hermitian(s)[0]
    return LhsDeterministic(signs, hidden, BinaryPovm(identity(4) - b1, b1))


def random_local_strategy(rng: np.random.Generator, n_components: int = 3) -> CustomLocal:
    """Random mixture of local response tables (adversarial fuzzing family)."""
    weights = rng.random(n_components)
    weights /= weights.sum()
    components = []
    for w in weights:
        alice = {j: float(rng.random()) for j in (1, 2, 3)}
        g = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        s = g.conj().T @ g
        effect = rng.random() * s / eig_hermitian(s)[0]
        components.append(LocalComponent(float(w), alice, effect))
    return CustomLocal(tuple(components))


_TALLY_HEADER = ["j", "s", "a", "b", "count"]


def format_tally(tally: TallyTable) -> str:
    """Tally as CSV text with signed s and a columns, zero cells omitted."""
    lines = [",".join(_TALLY_HEADER)]
    for j, s in SETTING_KEYS:
        for a, b in _CELLS:
            n = tally.cell(j, s, a, b)
            if n:
                lines.append(f"{j},{s:+d},{a:+d},{b},{n}")
    return "\n".join(lines) + "\n"


def save_tally(tally: TallyTable, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_tally(tally))


def load_tally(path: str) -> TallyTable:
    """Read a tally CSV; malformed rows raise with their line number."""
    counts: dict[tuple[int, int, int, int], int] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _TALLY_HEADER:
            raise ValueError(f"tally header must be {','.join(_TALLY_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                j, s, a, b, n = (int(x) for x in row)
            except ValueError as exc:
                raise ValueError(f"malformed tally row at line {lineno}: {row}") from exc
            cell = (j, s, a, b)
            if cell in counts:
                raise ValueError(f"duplicate tally cell {cell} at line {lineno}")
            counts[cell] = n
    return TallyTable(counts)
