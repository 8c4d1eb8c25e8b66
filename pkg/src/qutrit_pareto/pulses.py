"""The eight two-state-inspired pulse models.

A model pairs an envelope (super-Gaussian ``SG`` or hyperbolic secant ``SECH``)
with one of four detuning families, numbered 1-4 (linear, quintic, tanh,
tanh + sech dip). Frequencies are in GHz and times in ns throughout.

The flat parameter vector used by the optimizer is ordered

    [omega0, n, beta|epsilon, k1, (k2..k5 | gamma1 | k2, gamma1, gamma2)]

so SG1/SECH1 carry 4 genes, SG3/SECH3 5, SG4/SECH4 7 and SG2/SECH2 8.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any

import numpy as np

from qutrit_pareto import _kernels as K


class EnvelopeKind(str, Enum):
    SUPER_GAUSSIAN = "SuperGaussian"
    SECH = "Sech"


class DetuningKind(str, Enum):
    LINEAR = "Linear"
    QUINTIC = "Quintic"
    TANH = "Tanh"
    TANH_SECH = "TanhSech"


MODEL_NAMES = ("SG1", "SG2", "SG3", "SG4", "SECH1", "SECH2", "SECH3", "SECH4")

_DETUNING_BY_DIGIT = {
    "1": DetuningKind.LINEAR,
    "2": DetuningKind.QUINTIC,
    "3": DetuningKind.TANH,
    "4": DetuningKind.TANH_SECH,
}
_N_K = {
    DetuningKind.LINEAR: 1,
    DetuningKind.QUINTIC: 5,
    DetuningKind.TANH: 1,
    DetuningKind.TANH_SECH: 2,
}
_N_GAMMA = {
    DetuningKind.LINEAR: 0,
    DetuningKind.QUINTIC: 0,
    DetuningKind.TANH: 1,
    DetuningKind.TANH_SECH: 2,
}
_ENV_CODE = {EnvelopeKind.SUPER_GAUSSIAN: K.ENV_SUPER_GAUSSIAN, EnvelopeKind.SECH: K.ENV_SECH}
_DET_CODE = {
    DetuningKind.LINEAR: K.DET_LINEAR,
    DetuningKind.QUINTIC: K.DET_QUINTIC,
    DetuningKind.TANH: K.DET_TANH,
    DetuningKind.TANH_SECH: K.DET_TANH_SECH,
}

# Distance kept from open interval ends when the optimizer needs a closed box.
OPEN_MARGIN = 1e-3


class PulseDomainError(ValueError):
    """Raised when a pulse function is evaluated outside [-T/2, T/2]."""


class ArityError(ValueError):
    """Raised when a parameter vector has the wrong length for its model."""


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    lo_open: bool = False
    hi_open: bool = False
    unit: str = ""

    def contains(self, x: float) -> bool:
        if not math.isfinite(x):
            return False
        above = x > self.lo if self.lo_open else x >= self.lo
        below = x < self.hi if self.hi_open else x <= self.hi
        return above and below

    def closed(self, margin: float = OPEN_MARGIN) -> tuple[float, float]:
        lo = self.lo + margin if self.lo_open else self.lo
        hi = self.hi - margin if self.hi_open else self.hi
        return lo, hi

    def __str__(self) -> str:
        text = f"{'(' if self.lo_open else '['}{self.lo:g}, {self.hi:g}{')' if self.hi_open else ']'}"
        return f"{text} {self.unit}" if self.unit else text


BOUNDS: dict[str, Interval] = {
    "omega0": Interval(0.0, 0.1, unit="GHz"),
    "n": Interval(0.0, 10.0, lo_open=True),
    "beta": Interval(-6.0, 0.0, hi_open=True),
    "epsilon": Interval(0.0, 6.0, lo_open=True),
    "k1": Interval(-0.3, 0.3, unit="GHz"),
    "k2": Interval(-0.1, 0.1, unit="GHz"),
    "k3": Interval(-0.1, 0.1, unit="GHz"),
    "k4": Interval(-0.1, 0.1, unit="GHz"),
    "k5": Interval(-0.1, 0.1, unit="GHz"),
    "gamma1": Interval(0.0, 8.0, lo_open=True),
    "gamma2": Interval(0.0, 8.0, lo_open=True),
}


@dataclass(frozen=True)
class EnvelopeParams:
    kind: EnvelopeKind
    omega0: float
    n: float
    shape: float  # beta (< 0) for SuperGaussian, epsilon (> 0) for Sech


@dataclass(frozen=True)
class DetuningParams:
    kind: DetuningKind
    k: tuple[float, ...]
    gamma: tuple[float, ...] = ()


@dataclass(frozen=True)
class Violation:
    field: str
    value: float
    interval: str

    def __str__(self) -> str:
        return f"{self.field} ∉ {self.interval}"


@dataclass(frozen=True)
class PulseModel:
    name: str
    envelope: EnvelopeParams
    detuning: DetuningParams
    T: float
    delta: float = 0.0

    @property
    def parameter_names(self) -> tuple[str, ...]:
        return parameter_names(self.name)

    def vector(self) -> np.ndarray:
        return vector_from_model(self)

    def with_delta(self, delta: float) -> PulseModel:
        return replace(self, delta=float(delta))

    def with_omega0(self, omega0: float) -> PulseModel:
        return replace(self, envelope=replace(self.envelope, omega0=float(omega0)))

    def with_detuning_sign_flipped(self) -> PulseModel:
        """Return the model with Delta(t) - delta replaced by its negative."""
        det = self.detuning
        return replace(self, detuning=replace(det, k=tuple(-k for k in det.k)))

    def envelope_at(self, t):
        return envelope_value(self.envelope, t, self.T)

    def detuning_at(self, t, delta: float | None = None):
        return detuning_value(self.detuning, t, self.T, self.delta if delta is None else delta)


def split_name(name: str) -> tuple[EnvelopeKind, DetuningKind]:
    if name not in MODEL_NAMES:
        raise ValueError(f"unknown model {name!r}; expected one of {', '.join(MODEL_NAMES)}")
    env = EnvelopeKind.SUPER_GAUSSIAN if name.startswith("SG") else EnvelopeKind.SECH
    return env, _DETUNING_BY_DIGIT[name[-1]]


def parameter_names(name: str) -> tuple[str, ...]:
    env, det = split_name(name)
    shape = "beta" if env is EnvelopeKind.SUPER_GAUSSIAN else "epsilon"
    names = ["omega0", "n", shape, "k1"]
    if det is DetuningKind.QUINTIC:
        names += ["k2", "k3", "k4", "k5"]
    elif det is DetuningKind.TANH:
        names += ["gamma1"]
    elif det is DetuningKind.TANH_SECH:
        names += ["k2", "gamma1", "gamma2"]
    return tuple(names)


def parameter_intervals(name: str) -> list[Interval]:
    return [BOUNDS[p] for p in parameter_names(name)]


def search_box(name: str) -> tuple[np.ndarray, np.ndarray]:
    """Closed lower/upper bound vectors for the optimizer."""
    pairs = [iv.closed() for iv in parameter_intervals(name)]
    return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])


def model_from_vector(name: str, params, T: float, delta: float = 0.0) -> PulseModel:
    names = parameter_names(name)
    x = [float(v) for v in np.asarray(params, dtype=float).ravel()]
    if len(x) != len(names):
        raise ArityError(f"{name} takes {len(names)} parameters, got {len(x)}")
    env_kind, det_kind = split_name(name)
    values = dict(zip(names, x))
    envelope = EnvelopeParams(env_kind, values["omega0"], values["n"], x[2])
    ks = tuple(values[f"k{j}"] for j in range(1, _N_K[det_kind] + 1))
    gammas = tuple(values[f"gamma{j}"] for j in range(1, _N_GAMMA[det_kind] + 1))
    return PulseModel(name, envelope, DetuningParams(det_kind, ks, gammas), float(T), float(delta))


def vector_from_model(model: PulseModel) -> np.ndarray:
    env, det = model.envelope, model.detuning
    x = [env.omega0, env.n, env.shape, det.k[0]]
    if det.kind is DetuningKind.QUINTIC:
        x += list(det.k[1:5])
    elif det.kind is DetuningKind.TANH:
        x += [det.gamma[0]]
    elif det.kind is DetuningKind.TANH_SECH:
        x += [det.k[1], det.gamma[0], det.gamma[1]]
    return np.array(x, dtype=float)


def validate(model: PulseModel) -> list[Violation]:
    """Return every bound violation of ``model``; an empty list means valid."""
    out: list[Violation] = []
    try:
        env_kind, det_kind = split_name(model.name)
    except ValueError:
        return [Violation("name", math.nan, "{" + ", ".join(MODEL_NAMES) + "}")]
    if model.envelope.kind is not env_kind:
        out.append(Violation("envelope.kind", math.nan, env_kind.value))
    if model.detuning.kind is not det_kind:
        out.append(Violation("detuning.kind", math.nan, det_kind.value))
    if len(model.detuning.k) != _N_K[det_kind] or len(model.detuning.gamma) != _N_GAMMA[det_kind]:
        out.append(Violation("detuning.arity", math.nan, f"{_N_K[det_kind]} k, {_N_GAMMA[det_kind]} gamma"))
        return out
    if not (math.isfinite(model.T) and model.T > 0):
        out.append(Violation("T", model.T, "(0, inf) ns"))
    if not math.isfinite(model.delta):
        out.append(Violation("delta", model.delta, "finite GHz"))
    for pname, value in zip(parameter_names(model.name), vector_from_model(model)):
        iv = BOUNDS[pname]
        if not iv.contains(value):
            out.append(Violation(pname, float(value), str(iv)))
    return out


def pack(
    model: PulseModel,
    *,
    delta: float | None = None,
    omega0: float | None = None,
    E_C: float = 0.3,
    coupling_ratio: float = math.sqrt(2.0),
    detuning_sign: float = -1.0,
) -> np.ndarray:
    """Flatten ``model`` into the kernel parameter vector."""
    p = np.zeros(K.N_PARAMS)
    env, det = model.envelope, model.detuning
    p[K.P_T] = model.T
    p[K.P_OMEGA0] = env.omega0 if omega0 is None else omega0
    p[K.P_N] = env.n
    p[K.P_SHAPE] = env.shape
    p[K.P_K : K.P_K + len(det.k)] = det.k
    p[K.P_GAMMA : K.P_GAMMA + len(det.gamma)] = det.gamma
    p[K.P_DELTA] = model.delta if delta is None else delta
    p[K.P_EC] = E_C
    p[K.P_RATIO] = coupling_ratio
    p[K.P_SIGN] = detuning_sign
    p[K.P_ENV_KIND] = _ENV_CODE[env.kind]
    p[K.P_DET_KIND] = _DET_CODE[det.kind]
    p[K.P_ENV_NORM] = K.envelope_norm(_ENV_CODE[env.kind], env.shape)
    return p


def _times(t, T: float) -> tuple[np.ndarray, bool]:
    arr = np.atleast_1d(np.asarray(t, dtype=float))
    half = 0.5 * T
    if np.any(np.abs(arr) > half * (1 + 1e-12)):
        raise PulseDomainError(f"time outside the pulse window [-{half:g}, {half:g}] ns")
    return np.ascontiguousarray(np.clip(arr, -half, half)), np.ndim(t) == 0


def _pulse_stub(env: EnvelopeParams | None, det: DetuningParams | None, T: float, delta: float) -> np.ndarray:
    env = env or EnvelopeParams(EnvelopeKind.SECH, 0.0, 1.0, 1.0)
    det = det or DetuningParams(DetuningKind.LINEAR, (0.0,))
    return pack(PulseModel("SG1", env, det, T, delta))


def envelope_value(env: EnvelopeParams, t, T: float):
    """Rabi amplitude Omega(t) in GHz; scalar in, scalar out."""
    ts, scalar = _times(t, T)
    out = K.envelope_array(_pulse_stub(env, None, T, 0.0), ts)
    return float(out[0]) if scalar else out


def detuning_value(det: DetuningParams, t, T: float, delta: float = 0.0):
    """Detuning Delta(t) in GHz, offset ``delta`` included."""
    ts, scalar = _times(t, T)
    out = K.detuning_array(_pulse_stub(None, det, T, delta), ts)
    return float(out[0]) if scalar else out


def detuning_rate(det: DetuningParams, t, T: float):
    """dDelta/dt in GHz/ns, from the closed-form derivative of each family."""
    ts, scalar = _times(t, T)
    out = K.detuning_rate_array(_pulse_stub(None, det, T, 0.0), ts)
    return float(out[0]) if scalar else out


def model_to_dict(model: PulseModel) -> dict[str, Any]:
    shape_key = "beta" if model.envelope.kind is EnvelopeKind.SUPER_GAUSSIAN else "epsilon"
    return {
        "name": model.name,
        "T_ns": model.T,
        "omega0_GHz": model.envelope.omega0,
        "n": model.envelope.n,
        shape_key: model.envelope.shape,
        "k_GHz": list(model.detuning.k),
        "gamma": list(model.detuning.gamma),
        "delta_GHz": model.delta,
    }


def model_from_dict(data: dict[str, Any]) -> PulseModel:
    name = data["name"]
    env_kind, det_kind = split_name(name)
    shape_key = "beta" if env_kind is EnvelopeKind.SUPER_GAUSSIAN else "epsilon"
    env = EnvelopeParams(env_kind, float(data["omega0_GHz"]), float(data["n"]), float(data[shape_key]))
    det = DetuningParams(
        det_kind,
        tuple(float(v) for v in data["k_GHz"]),
        tuple(float(v) for v in data.get("gamma", [])),
    )
    return PulseModel(name, env, det, float(data["T_ns"]), float(data.get("delta_GHz", 0.0)))


def model_to_json(model: PulseModel) -> str:
    return json.dumps(model_to_dict(model), indent=2)


def model_from_json(text: str) -> PulseModel:
    return model_from_dict(json.loads(text))


# Pulses reported for SECH3 at maximum detuning robustness.
REFERENCE_SECH3 = {
    50.0: (0.1, 0.995, 2.0, -0.161, 1.92),
    200.0: (0.0582, 1.14, 3.15, -0.152, 2.92),
}


def reference_sech3(T: float) -> PulseModel:
    return model_from_vector("SECH3", REFERENCE_SECH3[float(T)], T)
