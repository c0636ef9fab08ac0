"""Duffing-type oscillator data generation.

Provides the base-excited oscillator simulator (fixed-step RK4 with
zero-order-hold input), the swept-cosine excitation profile, SNR-controlled
noise injection, finite-difference derivative estimation, and the
parabolic-track design formulas that map a track layout to stiffness and
friction coefficients.

The simulated acceleration column is computed by evaluating the oscillator
right-hand side on the stored states, so a regression on (q, qdot, zddot)
against qddot can recover the normalized coefficients exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .expr import binary, unary, variable

__all__ = [
    "CSV_HEADER",
    "DataFormatError",
    "DivergedTrajectory",
    "DuffingParams",
    "SignalSet",
    "TrackDesign",
    "ZeroSignalPower",
    "add_noise",
    "apply_noise",
    "chirp_input",
    "find_bifurcation_amplitude",
    "finite_diff",
    "friction_from_track",
    "has_bifurcation_jump",
    "nominal_params",
    "nominal_track",
    "params_from_track",
    "read_csv",
    "simulate",
    "simulate_chirp",
    "stiffness_from_track",
    "true_terms",
    "write_csv",
]

CSV_HEADER = "t,q,qdot,qddot,zddot"
CSV_COLUMNS = tuple(CSV_HEADER.split(","))

# Nominal bench oscillator and excitation profile used by the CLI defaults.
NOMINAL_MASS = 0.49
NOMINAL_DAMPING = 1.8
NOMINAL_STIFFNESS = 487.0
NOMINAL_CUBIC = 1.07e6
NOMINAL_DT = 0.488e-3
NOMINAL_F0 = 2.0
NOMINAL_F1 = 20.0
NOMINAL_DURATION = 40.0
NOMINAL_SPLIT = 16000
# Smallest sweep amplitude (m/s^2) whose response shows the hardening jump;
# selected by find_bifurcation_amplitude over the nominal oscillator.
NOMINAL_AMPLITUDE = 3.0


class DivergedTrajectory(Exception):
    """Integration left the configured state bound."""


class ZeroSignalPower(Exception):
    """SNR is undefined for a constant (zero-variance) signal."""


class DataFormatError(Exception):
    """CSV data does not match the expected schema."""


@dataclass(frozen=True)
class DuffingParams:
    """Physical oscillator parameters: m qdd = -c qd - k q - k3 q^3
    - mu1 sgn(qd) - mu2 q^2 sgn(qd) - m zdd."""

    m: float
    c: float
    k: float
    k3: float
    mu1: float = 0.0
    mu2: float = 0.0

    def __post_init__(self):
        if self.m <= 0:
            raise ValueError("mass must be positive")
        if self.k3 < 0:
            raise ValueError("cubic stiffness must be non-negative")
        if self.mu1 < 0 or self.mu2 < 0:
            raise ValueError("friction coefficients must be non-negative")


@dataclass(frozen=True)
class TrackDesign:
    """Parabolic track layout: curvature a, half-gauge b, rolling contact
    stiffness k1 and friction coefficient mu."""

    k1: float
    a: float
    b: float
    mu: float = 0.0

    def __post_init__(self):
        if self.k1 <= 0 or self.a <= 0 or self.b <= 0:
            raise ValueError("track geometry and stiffness must be positive")
        if self.mu < 0:
            raise ValueError("friction coefficient must be non-negative")


def stiffness_from_track(design):
    """Linear and cubic stiffness realized by a parabolic track."""
    k = 4.0 * design.k1 * design.a * design.b
    k3 = 4.0 * design.k1 * design.a**2
    return k, k3


def friction_from_track(design):
    """Coulomb friction coefficients realized by a parabolic track."""
    mu1 = 2.0 * design.mu * design.k1 * design.b
    mu2 = 2.0 * design.mu * design.k1 * design.a
    return mu1, mu2


def params_from_track(design, m, c):
    k, k3 = stiffness_from_track(design)
    mu1, mu2 = friction_from_track(design)
    return DuffingParams(m=m, c=c, k=k, k3=k3, mu1=mu1, mu2=mu2)


def nominal_track():
    # Half-gauge chosen so the track realizes the nominal linear stiffness.
    k1, a = 16.7e3, 4.0
    return TrackDesign(k1=k1, a=a, b=NOMINAL_STIFFNESS / (4.0 * k1 * a), mu=0.05)


def nominal_params(friction=False):
    """Bench oscillator parameters; with friction they derive from the track."""
    if friction:
        return params_from_track(nominal_track(), m=NOMINAL_MASS, c=NOMINAL_DAMPING)
    return DuffingParams(
        m=NOMINAL_MASS, c=NOMINAL_DAMPING, k=NOMINAL_STIFFNESS, k3=NOMINAL_CUBIC
    )


@dataclass(frozen=True)
class SignalSet:
    """Uniformly sampled record of the oscillator signals.

    The first ``split`` samples form the validation head used for model
    scoring; the remainder is the identification segment the regression is
    fitted on.  Arrays are copied and locked at construction.
    """

    t: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    qddot: np.ndarray
    zddot: np.ndarray
    split: int

    def __post_init__(self):
        arrays = {}
        n = None
        for name in ("t", "q", "qdot", "qddot", "zddot"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.ndim != 1:
                raise ValueError(f"{name} must be one-dimensional")
            if n is None:
                n = arr.size
            elif arr.size != n:
                raise ValueError("all signal columns must share one length")
            arr.flags.writeable = False
            arrays[name] = arr
        if n < 2:
            raise ValueError("need at least two samples")
        steps = np.diff(arrays["t"])
        if steps[0] <= 0 or not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise ValueError("time must increase with a uniform step")
        if not 0 < self.split < n:
            raise ValueError("split must cut the record into two non-empty parts")
        for name, arr in arrays.items():
            object.__setattr__(self, name, arr)

    @property
    def n(self):
        return self.t.size

    @property
    def dt(self):
        return float(self.t[1] - self.t[0])

    @property
    def val_slice(self):
        return slice(0, self.split)

    @property
    def id_slice(self):
        return slice(self.split, self.n)

    def state_matrix(self):
        """Columns (q, qdot, zddot) the expression variables X0..X2 map to."""
        cached = self.__dict__.get("_state")
        if cached is None:
            cached = np.column_stack((self.q, self.qdot, self.zddot))
            cached.flags.writeable = False
            object.__setattr__(self, "_state", cached)
        return cached

    def with_columns(self, **columns):
        fields = {name: getattr(self, name) for name in CSV_COLUMNS}
        fields.update(columns)
        return SignalSet(split=self.split, **fields)


def write_csv(signals, path):
    """Write the record with full round-trip precision."""
    data = np.column_stack(
        (signals.t, signals.q, signals.qdot, signals.qddot, signals.zddot)
    )
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=CSV_HEADER, comments="")


def read_csv(path, split=NOMINAL_SPLIT):
    """Read a signal CSV, validating the schema by column name."""
    try:
        handle = open(path)
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    with handle:
        header = handle.readline().strip()
        names = tuple(part.strip() for part in header.split(","))
        missing = [name for name in CSV_COLUMNS if name not in names]
        if missing:
            raise DataFormatError(
                f"missing column(s) {', '.join(missing)!s} in {path} "
                f"(header {header!r})"
            )
        extra = [name for name in names if name not in CSV_COLUMNS]
        if extra:
            raise DataFormatError(f"unexpected column(s) {', '.join(extra)} in {path}")
        try:
            data = np.loadtxt(handle, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise DataFormatError(f"malformed numeric data in {path}: {exc}") from exc
    if data.shape[1] != len(names):
        raise DataFormatError(f"row width does not match header in {path}")
    columns = {name: data[:, names.index(name)] for name in CSV_COLUMNS}
    try:
        return SignalSet(split=split, **columns)
    except ValueError as exc:
        raise DataFormatError(f"invalid signal data in {path}: {exc}") from exc


def chirp_input(f0, f1, duration, dt, amplitude):
    """Linearly swept cosine acceleration profile.

    The instantaneous frequency runs from f0 at t=0 to f1 at t=duration;
    with f0 == f1 this degenerates to a pure cosine.
    """
    if duration <= 0 or dt <= 0:
        raise ValueError("duration and dt must be positive")
    if f0 < 0 or f1 < 0:
        raise ValueError("sweep frequencies must be non-negative")
    n = int(round(duration / dt))
    if n < 2:
        raise ValueError("duration must cover at least two samples")
    t = np.arange(n) * dt
    phase = 2.0 * np.pi * (f0 * t + (f1 - f0) * t * t / (2.0 * duration))
    return amplitude * np.cos(phase)


def _sgn(x):
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0


def acceleration(params, q, qdot, zddot):
    """Normalized right-hand side; vectorized over equal-length arrays."""
    p = params
    return (
        -(p.c / p.m) * qdot
        - (p.k / p.m) * q
        - (p.k3 / p.m) * q**3
        - (p.mu1 / p.m) * np.sign(qdot)
        - (p.mu2 / p.m) * q * q * np.sign(qdot)
        - zddot
    )


def simulate(params, zddot, dt, q0=(0.0, 0.0), split=None, bound=1e6):
    """Integrate the base-excited oscillator with fixed-step RK4.

    The input sample zddot[i] is held constant across the step from t_i to
    t_{i+1} (zero-order hold).  The returned acceleration column is the
    right-hand side evaluated on the stored states, not a finite
    difference.  DivergedTrajectory is raised when the state magnitude
    exceeds ``bound``.

    Parameters
    ----------
    params : DuffingParams
    zddot : array of base acceleration samples, one per output sample.
    dt : sample step in seconds.
    q0 : initial (displacement, velocity).
    split : validation/identification boundary; defaults to the nominal
        16000-sample head for long records, a fifth of the record otherwise.
    """
    zddot = np.asarray(zddot, dtype=float)
    if zddot.ndim != 1 or zddot.size < 2:
        raise ValueError("zddot must hold at least two samples")
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = zddot.size
    cm = params.c / params.m
    km = params.k / params.m
    k3m = params.k3 / params.m
    mu1m = params.mu1 / params.m
    mu2m = params.mu2 / params.m

    def rhs(x, v, u):
        s = _sgn(v)
        return v, -cm * v - km * x - k3m * x * x * x - mu1m * s - mu2m * x * x * s - u

    q = np.empty(n)
    qdot = np.empty(n)
    x, v = float(q0[0]), float(q0[1])
    q[0], qdot[0] = x, v
    half = 0.5 * dt
    sixth = dt / 6.0
    for i in range(n - 1):
        u = zddot[i]
        k1x, k1v = rhs(x, v, u)
        k2x, k2v = rhs(x + half * k1x, v + half * k1v, u)
        k3x, k3v = rhs(x + half * k2x, v + half * k2v, u)
        k4x, k4v = rhs(x + dt * k3x, v + dt * k3v, u)
        x = x + sixth * (k1x + 2.0 * (k2x + k3x) + k4x)
        v = v + sixth * (k1v + 2.0 * (k2v + k3v) + k4v)
        if not (abs(x) < bound and abs(v) < bound):
            raise DivergedTrajectory(f"state magnitude exceeded {bound:g} at step {i + 1}")
        q[i + 1], qdot[i + 1] = x, v
    qddot = acceleration(params, q, qdot, zddot)
    if split is None:
        split = NOMINAL_SPLIT if n > NOMINAL_SPLIT else max(1, n // 5)
    return SignalSet(
        t=np.arange(n) * dt, q=q, qdot=qdot, qddot=qddot, zddot=zddot, split=split
    )


def simulate_chirp(
    params,
    amplitude=NOMINAL_AMPLITUDE,
    f0=NOMINAL_F0,
    f1=NOMINAL_F1,
    duration=NOMINAL_DURATION,
    dt=NOMINAL_DT,
    split=NOMINAL_SPLIT,
    q0=(0.0, 0.0),
):
    """Simulate the oscillator under the swept-cosine excitation."""
    zddot = chirp_input(f0, f1, duration, dt, amplitude)
    return simulate(params, zddot, dt, q0=q0, split=split)


def add_noise(column, snr_db, rng):
    """Add zero-mean Gaussian noise at the requested SNR (dB).

    The noise variance is signal_power / 10**(snr_db / 10) with signal power
    measured about the column mean.  An infinite SNR returns the column
    unchanged.
    """
    column = np.asarray(column, dtype=float)
    if math.isinf(snr_db) and snr_db > 0:
        return column.copy()
    power = float(np.mean((column - column.mean()) ** 2))
    if power <= 0.0:
        raise ZeroSignalPower("cannot scale noise to a constant signal")
    sigma = math.sqrt(power / 10.0 ** (snr_db / 10.0))
    return column + sigma * rng.standard_normal(column.size)


def apply_noise(signals, snr_db, rng):
    """Corrupt the named channels of a SignalSet at per-channel SNRs.

    ``snr_db`` maps channel names (q, qdot, qddot, zddot) to SNR values;
    channels are processed in that fixed order so draws are reproducible.
    """
    updates = {}
    for name in ("q", "qdot", "qddot", "zddot"):
        if name in snr_db and not (math.isinf(snr_db[name]) and snr_db[name] > 0):
            updates[name] = add_noise(getattr(signals, name), snr_db[name], rng)
    unknown = set(snr_db) - {"q", "qdot", "qddot", "zddot"}
    if unknown:
        raise ValueError(f"unknown noise channel(s) {sorted(unknown)}")
    if not updates:
        return signals
    return signals.with_columns(**updates)


def finite_diff(column, dt):
    """Second-order finite-difference derivative.

    Central differences in the interior, second-order one-sided stencils at
    the endpoints.
    """
    column = np.asarray(column, dtype=float)
    if column.size < 3:
        raise ValueError("need at least three samples")
    if dt <= 0:
        raise ValueError("dt must be positive")
    return np.gradient(column, dt, edge_order=2)


def response_envelope(q, window=1024):
    """Blockwise peak magnitude of the response."""
    q = np.asarray(q, dtype=float)
    blocks = q.size // window
    if blocks < 2:
        raise ValueError("record too short for the envelope window")
    return np.abs(q[: blocks * window]).reshape(blocks, window).max(axis=1)


def has_bifurcation_jump(signals, window=512, asymmetry=4.0):
    """Detect the hardening jump in a swept-excitation response envelope.

    Under an upward sweep a hardening oscillator rides the resonant branch
    for a long stretch and then collapses at the fold within a few cycles.
    Linear resonance passage is nearly symmetric because both the build-up
    and the ring-down are limited by the damping bandwidth.  The jump is
    declared when the rise from half peak to peak takes more than
    ``asymmetry`` times as long as the fall back to half peak, and the
    envelope never recovers above half peak afterwards.
    """
    env = response_envelope(signals.q, window=window)
    peak = env.max()
    if peak <= 0.0:
        return False
    i_peak = int(env.argmax())
    half = 0.5 * peak
    below_before = np.nonzero(env[:i_peak] < half)[0]
    rise = i_peak - (below_before[-1] if below_before.size else 0)
    below_after = np.nonzero(env[i_peak:] < half)[0]
    if not below_after.size:
        return False
    i_fall = i_peak + int(below_after[0])
    fall = max(i_fall - i_peak, 1)
    if (env[i_fall:] > half).any():
        return False
    return rise / fall >= asymmetry


def find_bifurcation_amplitude(
    params,
    candidates=(0.5, 1.0, 2.0, 3.0, 5.0, 8.0, 12.0, 20.0),
    f0=NOMINAL_F0,
    f1=NOMINAL_F1,
    duration=NOMINAL_DURATION,
    dt=NOMINAL_DT,
):
    """Smallest candidate sweep amplitude whose response shows the jump."""
    for amplitude in candidates:
        signals = simulate_chirp(
            params, amplitude=amplitude, f0=f0, f1=f1, duration=duration, dt=dt
        )
        if has_bifurcation_jump(signals):
            return float(amplitude)
    raise ValueError("no candidate amplitude produced a bifurcation jump")


def true_terms(params):
    """Ground-truth normalized model as (tree, coefficient) pairs.

    qddot = -(c/m) qdot - (k/m) q - (k3/m) q^3
            [- (mu1/m) sgn(qdot) - (mu2/m) q^2 sgn(qdot)] - zddot
    """
    q, qd, zdd = variable(0), variable(1), variable(2)
    cubic = binary("*", binary("*", q, q), q)
    terms = [
        (qd, -params.c / params.m),
        (q, -params.k / params.m),
        (cubic, -params.k3 / params.m),
    ]
    if params.mu1 != 0.0:
        terms.append((unary("sgn", qd), -params.mu1 / params.m))
    if params.mu2 != 0.0:
        terms.append((binary("*", binary("*", q, q), unary("sgn", qd)), -params.mu2 / params.m))
    terms.append((zdd, -1.0))
    return tuple(terms)
