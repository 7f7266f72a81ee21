"""Target distributions on R^d and the built-in suite.

A target carries an unnormalised log-density and its analytic gradient.
Consumers only ever use log-density differences and gradients, so additive
constants are allowed; each constructor documents which constant it keeps.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import expit, logsumexp

from .errors import DimensionMismatch, EmptyData, InvalidParameter, MalformedData, NonFinite
from .numkit import LOG_2PI, RngStream, cholesky, spd_inverse, spd_logdet

LogDensity = Callable[[np.ndarray], float]
Gradient = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class ReferenceSet:
    """Gold-standard draws from a target together with their moments."""

    samples: np.ndarray
    mean: np.ndarray = field(init=False)
    covariance: np.ndarray = field(init=False)
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if samples.shape[0] < 2:
            raise InvalidParameter("a reference set needs at least two samples")
        if not np.all(np.isfinite(samples)):
            raise NonFinite("reference samples contain non-finite values")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "mean", samples.mean(axis=0))
        cov = np.atleast_2d(np.cov(samples, rowvar=False))
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def save(self, path: str | Path) -> Path:
        """Write samples as CSV and a ``.json`` sidecar with the metadata."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = ",".join(f"x{i + 1}" for i in range(self.dim))
        np.savetxt(path, self.samples, delimiter=",", header=header, comments="", fmt="%.17g")
        meta = dict(self.metadata)
        meta.setdefault("n_samples", int(self.samples.shape[0]))
        meta.setdefault("dim", int(self.dim))
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "ReferenceSet":
        path = Path(path)
        samples = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        sidecar = path.with_suffix(".json")
        meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
        return cls(samples, metadata=meta)


@dataclass(frozen=True)
class TargetDistribution:
    name: str
    dim: int
    log_density_fn: LogDensity
    grad_fn: Gradient
    sampler: Callable[[RngStream, int], np.ndarray] | None = None
    params: dict = field(default_factory=dict)

    def log_density(self, x) -> float:
        return log_density(self, x)

    def grad_log_density(self, x) -> np.ndarray:
        return grad_log_density(self, x)


def _check_point(t: TargetDistribution, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape != (t.dim,):
        raise DimensionMismatch(f"{t.name} expects a point of length {t.dim}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NonFinite("point has non-finite entries")
    return x


def log_density(t: TargetDistribution, x) -> float:
    return float(t.log_density_fn(_check_point(t, x)))


def grad_log_density(t: TargetDistribution, x) -> np.ndarray:
    return np.asarray(t.grad_fn(_check_point(t, x)), dtype=np.float64)


def fd_gradient(t: TargetDistribution, x, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of the log-density."""
    if not h > 0:
        raise InvalidParameter("finite-difference step must be positive")
    x = _check_point(t, x)
    g = np.empty(t.dim)
    for i in range(t.dim):
        e = np.zeros(t.dim)
        e[i] = h
        g[i] = (t.log_density_fn(x + e) - t.log_density_fn(x - e)) / (2.0 * h)
    return g


# --- built-in targets -------------------------------------------------------


def gaussian(mean=None, cov=None, dim: int | None = None, name: str = "gaussian") -> TargetDistribution:
    """N(mean, cov), normalising constant included."""
    if mean is None and cov is None:
        dim = 1 if dim is None else int(dim)
        mean = np.zeros(dim)
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    d = mean.shape[0]
    cov = np.eye(d) if cov is None else np.atleast_2d(np.asarray(cov, dtype=np.float64))
    factor = cholesky(cov)
    precision = spd_inverse(factor)
    const = -0.5 * d * LOG_2PI - 0.5 * spd_logdet(factor)
    lower = factor.lower

    def logp(x):
        r = x - mean
        return const - 0.5 * float(r @ precision @ r)

    def grad(x):
        return -(precision @ (x - mean))

    def sample(rng: RngStream, n: int) -> np.ndarray:
        return mean + rng.normal((n, d)) @ lower.T

    return TargetDistribution(
        name, d, logp, grad, sample, {"mean": mean.tolist(), "cov": cov.tolist()}
    )


def laplace(dim: int = 2, scale: float = 1.0, name: str = "laplace") -> TargetDistribution:
    """Product of Laplace(0, scale) marginals, normalising constant included.

    The gradient is ``-sign(x) / scale`` with sign(0) = 0 on the coordinate
    hyperplanes where the density is not differentiable.
    """
    if scale <= 0:
        raise InvalidParameter("scale must be positive")
    d = int(dim)
    const = -d * np.log(2.0 * scale)

    def logp(x):
        return const - float(np.sum(np.abs(x))) / scale

    def grad(x):
        return -np.sign(x) / scale

    def sample(rng: RngStream, n: int) -> np.ndarray:
        return rng.generator.laplace(0.0, scale, size=(n, d))

    return TargetDistribution(name, d, logp, grad, sample, {"dim": d, "scale": scale})


def banana(sigma1: float = 2.0, bend: float = 0.5, name: str = "banana") -> TargetDistribution:
    """Twisted Gaussian: x1 ~ N(0, sigma1^2), x2 | x1 ~ N(bend (x1^2 - sigma1^2), 1).

    No normalising constant. The mode sits at (0, -bend * sigma1^2).
    """
    s2 = float(sigma1) ** 2
    b = float(bend)

    def logp(x):
        r = x[1] - b * (x[0] ** 2 - s2)
        return -0.5 * x[0] ** 2 / s2 - 0.5 * r * r

    def grad(x):
        r = x[1] - b * (x[0] ** 2 - s2)
        return np.array([-x[0] / s2 + 2.0 * b * x[0] * r, -r])

    def sample(rng: RngStream, n: int) -> np.ndarray:
        z = rng.normal((n, 2))
        x1 = np.sqrt(s2) * z[:, 0]
        return np.column_stack([x1, b * (x1**2 - s2) + z[:, 1]])

    return TargetDistribution(name, 2, logp, grad, sample, {"sigma1": sigma1, "bend": bend})


def mixture(means, sds, weights=None, name: str = "mixture") -> TargetDistribution:
    """Mixture of isotropic Gaussians N(means[k], sds[k]^2 I), normalised."""
    means = np.atleast_2d(np.asarray(means, dtype=np.float64))
    k, d = means.shape
    sds = np.broadcast_to(np.asarray(sds, dtype=np.float64), (k,)).copy()
    w = np.full(k, 1.0 / k) if weights is None else np.asarray(weights, dtype=np.float64)
    if np.any(sds <= 0) or np.any(w <= 0) or w.shape != (k,):
        raise InvalidParameter("mixture needs positive sds and weights, one per component")
    w = w / w.sum()
    log_w = np.log(w) - d * np.log(sds) - 0.5 * d * LOG_2PI

    def _terms(x):
        diff = x - means
        return log_w - 0.5 * np.sum(diff * diff, axis=1) / sds**2, diff

    def logp(x):
        return float(logsumexp(_terms(x)[0]))

    def grad(x):
        t, diff = _terms(x)
        resp = np.exp(t - logsumexp(t))
        return -(resp / sds**2) @ diff

    def sample(rng: RngStream, n: int) -> np.ndarray:
        comp = rng.generator.choice(k, size=n, p=w)
        return means[comp] + sds[comp, None] * rng.normal((n, d))

    return TargetDistribution(
        name, d, logp, grad, sample,
        {"means": means.tolist(), "sds": sds.tolist(), "weights": w.tolist()},
    )


# --- GLM posteriors from tabular data ---------------------------------------


def _read_table(data) -> tuple[list[str], np.ndarray]:
    if isinstance(data, (str, Path)) and Path(data).exists():
        text = Path(data).read_text(encoding="utf-8")
    elif hasattr(data, "read"):
        text = data.read()
    else:
        text = str(data)
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise EmptyData("table has no data rows")
    header, body = rows[0], rows[1:]
    if len(header) < 2:
        raise MalformedData("need at least one predictor column and one response column")
    values = np.empty((len(body), len(header)))
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise MalformedData(f"row {i + 2} has {len(row)} cells, expected {len(header)}")
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell == "" or cell.lower() in {"na", "nan", "null"}:
                raise MalformedData(f"missing value in row {i + 2}, column {header[j]!r}")
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise MalformedData(
                    f"non-numeric cell {cell!r} in row {i + 2}, column {header[j]!r}"
                ) from None
            if not np.isfinite(values[i, j]):
                raise MalformedData(f"non-finite cell in row {i + 2}, column {header[j]!r}")
    return header, values


def load_glm_target(
    data,
    family: str = "gaussian",
    prior_scale: float = 1.0,
    add_intercept: bool = False,
    name: str | None = None,
) -> TargetDistribution:
    """Posterior of a generalised linear model fitted to a CSV table.

    The last column is the response and every other column is a predictor,
    used as-is; pass ``add_intercept=True`` to prepend a column of ones.
    Coefficients get independent N(0, prior_scale^2) priors. For the
    ``gaussian`` family the final parameter is log(sigma), with the same prior.
    The log-density includes the Gaussian prior and likelihood constants.
    """
    if prior_scale <= 0:
        raise InvalidParameter("prior_scale must be positive")
    columns, values = _read_table(data)
    X, y = values[:, :-1], values[:, -1]
    if add_intercept:
        X = np.column_stack([np.ones(len(y)), X])
        columns = ["(intercept)", *columns]
    n, p = X.shape
    s2 = float(prior_scale) ** 2
    prior_const = -0.5 * LOG_2PI - np.log(prior_scale)

    if family in ("gaussian", "gaussian-likelihood"):
        dim = p + 1

        def logp(theta):
            beta, log_sigma = theta[:p], theta[p]
            r = y - X @ beta
            ll = -n * (0.5 * LOG_2PI + log_sigma) - 0.5 * float(r @ r) * np.exp(-2.0 * log_sigma)
            return ll + dim * prior_const - 0.5 * float(theta @ theta) / s2

        def grad(theta):
            beta, log_sigma = theta[:p], theta[p]
            r = y - X @ beta
            inv_var = np.exp(-2.0 * log_sigma)
            g = np.empty(dim)
            g[:p] = inv_var * (X.T @ r)
            g[p] = -n + float(r @ r) * inv_var
            return g - theta / s2

    elif family == "logistic":
        if not np.all((y == 0.0) | (y == 1.0)):
            raise MalformedData("logistic response must be 0/1")
        dim = p

        def logp(beta):
            eta = X @ beta
            ll = float(y @ eta - np.sum(np.logaddexp(0.0, eta)))
            return ll + dim * prior_const - 0.5 * float(beta @ beta) / s2

        def grad(beta):
            return X.T @ (y - expit(X @ beta)) - beta / s2

    else:
        raise InvalidParameter(f"unknown GLM family {family!r}")

    return TargetDistribution(
        name or f"glm-{family}",
        dim,
        logp,
        grad,
        None,
        {"family": family, "prior_scale": prior_scale, "columns": columns, "n_rows": n},
    )


# --- registry & reference sets ----------------------------------------------

_PRESETS: dict[str, Callable[..., TargetDistribution]] = {
    "gaussian1d": lambda: gaussian(dim=1, name="gaussian1d"),
    "gaussian2d": lambda: gaussian(dim=2, name="gaussian2d"),
    "laplace2d": lambda: laplace(2, name="laplace2d"),
    "banana": lambda: banana(),
    "mixture2d": lambda: mixture([[-2.0, 0.0], [2.0, 0.0]], [1.0, 1.0], name="mixture2d"),
}

_FAMILIES: dict[str, Callable[..., TargetDistribution]] = {
    "gaussian": gaussian,
    "laplace": laplace,
    "banana": banana,
    "mixture": mixture,
    "glm": load_glm_target,
}


def target_names() -> list[str]:
    return sorted(set(_PRESETS) | set(_FAMILIES))


def make_target(name: str, **params) -> TargetDistribution:
    """Build a target by preset name (``gaussian2d``) or family name plus parameters."""
    if not params and name in _PRESETS:
        return _PRESETS[name]()
    if name in _FAMILIES:
        return _FAMILIES[name](**params)
    if name in _PRESETS:
        raise InvalidParameter(f"preset target {name!r} takes no parameters")
    raise InvalidParameter(f"unknown target {name!r}; choose from {target_names()}")


def reference_chain(
    target: TargetDistribution,
    n_samples: int,
    rng: RngStream,
    thin: int = 100,
    burn_in: int = 10_000,
    x0=None,
) -> np.ndarray:
    """Long thinned MALA chain with a crude step-size search during burn-in.

    Used for targets without an exact sampler (GLM posteriors).
    """
    from .kernels import ConstantPolicy, Preconditioner, mh_step

    x = np.zeros(target.dim) if x0 is None else np.asarray(x0, dtype=np.float64)
    pc = Preconditioner.identity(target.dim)
    eps = 0.1
    accepted = 0
    for i in range(1, burn_in + 1):
        t = mh_step("rmala", x, ConstantPolicy(eps), pc, target, rng)
        x = t.x_next
        accepted += t.accepted
        if i % 100 == 0:
            eps *= 1.1 if accepted / 100 > 0.574 else 1 / 1.1
            accepted = 0
    policy = ConstantPolicy(eps)
    out = np.empty((n_samples, target.dim))
    for i in range(n_samples):
        for _ in range(thin):
            x = mh_step("rmala", x, policy, pc, target, rng).x_next
        out[i] = x
    return out


def make_reference(
    target: TargetDistribution,
    n_samples: int = 10_000,
    seed: int = 0,
    thin: int = 100,
) -> ReferenceSet:
    """Gold-standard samples: exact i.i.d. draws when available, else a thinned chain."""
    rng = RngStream(seed, stream_id=2**31 - 1)
    if target.sampler is not None:
        samples = target.sampler(rng, n_samples)
        method = "iid"
    else:
        samples = reference_chain(target, n_samples, rng, thin=thin)
        method = f"mala-chain-thin{thin}"
    return ReferenceSet(
        samples, metadata={"target": target.name, "seed": seed, "method": method}
    )
