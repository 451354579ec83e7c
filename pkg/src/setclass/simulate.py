"""
Hierarchical set-classification data and a benchmark harness.

Every set draws its own mean and covariance from a class-dependent law, then
``n_i`` i.i.d. normal observations. The mean is always
``N_p(delta_k, 0.01 I)`` with ``delta_1 = delta e_1`` and ``delta_2 = 0``; the
covariance follows one of four models:

1. fixed ``Omega_p(rho)`` for every set;
2. ``W_p(V_k, m) / m`` with ``V_k = Omega_p(rho) + sigma^2 e_k e_k'``;
3. ``p * IW_p(V_k, p)``;
4. ``Omega_p(rho) + sigma^2 u u'`` with ``u ~ vMF(e_k, kappa)``.

All randomness flows from ``numpy.random.default_rng([seed, replication])``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import classify
from .exceptions import SetClassError
from .pipeline import TrainConfig, fit_feature_map
from .setdata import ObservationSet, SetCollection

PCF_METHODS = ("PCF-LDA", "PCF-QDA", "PCF-MDEB", "PCF-YA")
VOTE_METHODS = ("LDA-MV", "LDA-WV", "QDA-MV", "QDA-WV", "MDEB-MV", "MDEB-WV", "YA-MV", "YA-WV")
METHODS = PCF_METHODS + VOTE_METHODS
ALIASES = {"YA": "YA-WV"}
_RULE_OF = {"LDA": "lda", "QDA": "qda", "MDEB": "mdeb", "YA": "ya"}


@dataclass
class SimulationConfig:
    model: int = 2
    p: int = 20
    N: int = 10
    delta: float = 1.0
    sigma: float = 3.0
    rho: float = 0.0
    m_wishart: int = 10
    kappa: float = 100.0
    size_mean: float = 20.0
    size_sd: float = 5.0
    size_min: int = 10
    mean_sd: float = 0.1
    seed: int = 0
    replications: int = 1
    n_test: int | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.model not in (1, 2, 3, 4):
            raise ValueError(f"model must be 1, 2, 3 or 4, got {self.model}")
        if self.p < 2:
            raise ValueError(f"p must be at least 2, got {self.p}")
        if self.N < 2 or self.N % 2:
            raise ValueError(f"N must be a positive even number (equal class sizes), got {self.N}")
        if self.n_test is not None and (self.n_test < 2 or self.n_test % 2):
            raise ValueError(f"n_test must be a positive even number, got {self.n_test}")
        if not 0 <= self.rho <= 1:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if self.m_wishart < 1 or self.size_min < 1 or self.replications < 1:
            raise ValueError("m_wishart, size_min and replications must be positive")
        if self.delta < 0 or self.sigma < 0 or self.kappa < 0 or self.mean_sd < 0 or self.size_sd < 0:
            raise ValueError("delta, sigma, kappa, mean_sd and size_sd must be nonnegative")

    @property
    def test_sets(self) -> int:
        return self.N if self.n_test is None else self.n_test

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def omega_cov(p: int, rho: float, rng) -> np.ndarray:
    """Modified auto-regressive covariance ``(s_i rho^(|i-j|^(1/7)) s_j)``, ``s_i ~ U[4/5, 6/5]``."""
    if not 0 <= rho <= 1:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    s = rng.uniform(0.8, 1.2, size=p)
    lag = np.abs(np.subtract.outer(np.arange(p), np.arange(p))) ** (1.0 / 7.0)
    # numpy evaluates 0.0 ** 0.0 as 1, so the diagonal is s_i^2 for every rho
    Om = np.outer(s, s) * np.power(float(rho), lag)
    if np.linalg.eigvalsh(Om)[0] < -1e-10:
        raise SetClassError("Omega_p(rho) is not positive semidefinite")
    return Om


def psd_factor(V: np.ndarray) -> np.ndarray:
    """A matrix F with F F' = V (Cholesky, falling back to a clipped eigen square root)."""
    try:
        return np.linalg.cholesky(V)
    except np.linalg.LinAlgError:
        lam, E = np.linalg.eigh(0.5 * (V + V.T))
        if lam[0] < -1e-8 * max(lam[-1], 1.0):
            raise SetClassError("matrix is not positive semidefinite") from None
        return E * np.sqrt(np.clip(lam, 0.0, None))


def wishart_factor(V: np.ndarray, m: int, rng, chol=None) -> np.ndarray:
    """F with F F' ~ W_p(V, m) (mean m V).

    Bartlett decomposition when ``m >= p``; for ``m < p`` the draw is singular
    and is built as a sum of ``m`` outer products of N_p(0, V) vectors.
    """
    p = V.shape[0]
    L = psd_factor(V) if chol is None else chol
    if m >= p:
        A = np.tril(rng.standard_normal((p, p)), k=-1)
        A[np.diag_indices(p)] = np.sqrt(rng.chisquare(m - np.arange(p)))
        return L @ A
    return L @ rng.standard_normal((L.shape[1], m))


def sample_wishart(V, m: int, rng) -> np.ndarray:
    F = wishart_factor(np.asarray(V, dtype=float), int(m), rng)
    return F @ F.T


def sample_inv_wishart(V, nu: int, rng) -> np.ndarray:
    """Inverse Wishart ``IW_p(V, nu)``: inverse of a ``W_p(V^-1, nu)`` draw (needs ``nu >= p``)."""
    V = np.asarray(V, dtype=float)
    if nu < V.shape[0]:
        raise ValueError(f"inverse Wishart needs nu >= p, got nu={nu}, p={V.shape[0]}")
    F = wishart_factor(np.linalg.inv(V), int(nu), rng)
    Finv = np.linalg.inv(F)
    return Finv.T @ Finv


def sample_vmf(mu, kappa: float, rng) -> np.ndarray:
    """von Mises-Fisher draw on the unit sphere (Wood's rejection sampler)."""
    mu = np.asarray(mu, dtype=float)
    d = mu.size
    if abs(np.linalg.norm(mu) - 1.0) > 1e-8:
        raise ValueError("mean direction must be a unit vector")
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    if d < 2:
        raise ValueError("von Mises-Fisher sampling needs dimension >= 2")
    if kappa == 0:
        x = rng.standard_normal(d)
        return x / np.linalg.norm(x)
    b = (d - 1) / (2 * kappa + math.sqrt(4 * kappa**2 + (d - 1) ** 2))
    x0 = (1 - b) / (1 + b)
    c = kappa * x0 + (d - 1) * math.log(1 - x0**2)
    while True:
        z = rng.beta((d - 1) / 2, (d - 1) / 2)
        w = (1 - (1 + b) * z) / (1 - (1 - b) * z)
        u = rng.uniform()
        if kappa * w + (d - 1) * math.log(1 - x0 * w) - c >= math.log(u):
            break
    v = rng.standard_normal(d)
    v -= (v @ mu) * mu
    v /= np.linalg.norm(v)
    return w * mu + math.sqrt(max(0.0, 1 - w**2)) * v


@dataclass
class Hyper:
    """Per-replication hyper-parameters shared by training and test sets."""

    omega: np.ndarray
    V: dict = field(default_factory=dict)
    chol: dict = field(default_factory=dict)
    inv_chol: dict = field(default_factory=dict)


def draw_hyper(config: SimulationConfig, rng) -> Hyper:
    p = config.p
    Om = omega_cov(p, config.rho, rng)
    h = Hyper(Om)
    h.chol[0] = psd_factor(Om)
    for k in (1, 2):
        V = Om.copy()
        V[k - 1, k - 1] += config.sigma**2
        h.V[k] = V
        if config.model == 2:
            h.chol[k] = psd_factor(V)
        elif config.model == 3:
            h.inv_chol[k] = psd_factor(np.linalg.inv(V))
    return h


def covariance_factor(config: SimulationConfig, hyper: Hyper, k: int, rng) -> np.ndarray:
    """F with F F' equal to one set's covariance for class ``k``."""
    p = config.p
    if config.model == 1:
        return hyper.chol[0]
    if config.model == 2:
        m = config.m_wishart
        return wishart_factor(hyper.V[k], m, rng, hyper.chol[k]) / math.sqrt(m)
    if config.model == 3:
        F = wishart_factor(hyper.V[k], p, rng, hyper.inv_chol[k])
        # (F F')^-1 = F^-T F^-1
        return math.sqrt(p) * np.linalg.inv(F).T
    e = np.zeros(p)
    e[k - 1] = 1.0
    u = sample_vmf(e, config.kappa, rng)
    return np.hstack([hyper.chol[0], config.sigma * u[:, None]])


def draw_covariance(config: SimulationConfig, hyper: Hyper, k: int, rng) -> np.ndarray:
    F = covariance_factor(config, hyper, k, rng)
    return F @ F.T


def set_size(config: SimulationConfig, rng) -> int:
    return max(int(math.floor(rng.normal(config.size_mean, config.size_sd))), config.size_min)


def _draw_sets(config, hyper, count, rng, prefix):
    p = config.p
    sets = []
    half = count // 2
    for i in range(count):
        k = 1 if i < half else 2
        mu = config.mean_sd * rng.standard_normal(p)
        if k == 1:
            mu[0] += config.delta
        F = covariance_factor(config, hyper, k, rng)
        n = set_size(config, rng)
        X = mu[:, None] + F @ rng.standard_normal((F.shape[1], n))
        sets.append(ObservationSet(X, k, f"{prefix}{i:03d}"))
    return SetCollection(tuple(sets), 2)


def generate_dataset(config: SimulationConfig, replication: int = 0):
    """Training and test collections for one replication (deterministic in seed, replication)."""
    config.validate()
    rng = np.random.default_rng([config.seed, replication])
    hyper = draw_hyper(config, rng)
    train = _draw_sets(config, hyper, config.N, rng, "train-")
    test = _draw_sets(config, hyper, config.test_sets, rng, "test-")
    return train, test


def _canonical(method: str) -> str:
    m = ALIASES.get(method, method)
    if m not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS + tuple(ALIASES)}")
    return m


@dataclass
class BenchmarkReport:
    """Per-method test misclassification rates (%) over replications."""

    config: dict
    methods: list
    errors: dict
    failures: dict
    r_hat: list = field(default_factory=list)
    p_values: list = field(default_factory=list)

    @property
    def replications(self) -> int:
        return len(self.r_hat)

    def _vals(self, m):
        return np.array([e for e in self.errors[m] if e is not None and not math.isnan(e)], dtype=float)

    def mean(self, m) -> float:
        v = self._vals(m)
        return float(v.mean()) if v.size else float("nan")

    def sd(self, m) -> float:
        v = self._vals(m)
        return float(v.std(ddof=1)) if v.size > 1 else float("nan")

    def se(self, m) -> float:
        v = self._vals(m)
        return float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("nan")

    def rate_r_zero(self) -> float:
        r = [x for x in self.r_hat if x is not None]
        return float(np.mean([x == 0 for x in r])) if r else float("nan")

    def rows(self):
        for m in self.methods:
            yield {
                "method": m,
                "mean_error": self.mean(m),
                "sd": self.sd(m),
                "se": self.se(m),
                "n_ok": int(self._vals(m).size),
                "n_failed": len(self.failures.get(m, [])),
            }

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# config: {json.dumps(self.config, sort_keys=True)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "mean_error", "sd", "se", "n_ok", "n_failed"])
        for row in self.rows():
            w.writerow([row["method"], _fmt(row["mean_error"]), _fmt(row["sd"]), _fmt(row["se"]),
                        row["n_ok"], row["n_failed"]])
        return buf.getvalue()

    def to_table(self) -> str:
        lines = [f"{'method':<10} {'error %':>8} {'sd':>7} {'se':>7}  n"]
        for row in self.rows():
            lines.append(
                f"{row['method']:<10} {row['mean_error']:8.2f} {row['sd']:7.2f} {row['se']:7.2f}  {row['n_ok']}"
            )
        lines.append(f"r_hat = 0 in {100 * self.rate_r_zero():.0f}% of {self.replications} replications")
        return "\n".join(lines)


def _fmt(x) -> str:
    return "nan" if math.isnan(x) else f"{x:.6f}"


def _error_rate(pred, truth) -> float:
    return 100.0 * float(np.mean(np.asarray(pred) != np.asarray(truth)))


def run_replication(config: SimulationConfig, methods, replication: int, train_config: TrainConfig | None = None):
    """Errors (%) per method for one replication, plus the selected r and p-value."""
    train, test = generate_dataset(config, replication)
    truth = test.labels
    errors, failures = {}, {}
    tc = train_config or TrainConfig()
    r_hat = p_value = None

    pcf = [m for m in methods if m in PCF_METHODS]
    if pcf:
        try:
            tc_rep = TrainConfig(**{**asdict(tc), "seed": int(tc.seed) + replication})
            fmap, Zstar = fit_feature_map(train, tc_rep)
            r_hat, p_value = fmap.r_hat, fmap.p_value
            Ztest = np.stack([fmap.transform(s, pad=True) for s in test.sets], axis=1)
        except Exception as exc:  # recorded per method, the run continues
            for m in pcf:
                failures[m] = f"{type(exc).__name__}: {exc}"
            pcf = []
        for m in pcf:
            try:
                rule = classify.fit_rule(_RULE_OF[m.split("-")[1]], Zstar, train.labels, tc.gamma)
                errors[m] = _error_rate(rule.predict(Ztest), truth)
            except Exception as exc:
                failures[m] = f"{type(exc).__name__}: {exc}"

    votes = [m for m in methods if m in VOTE_METHODS]
    if votes:
        Xall = np.hstack([s.observations for s in train.sets])
        yall = np.concatenate([np.full(s.n, s.label) for s in train.sets])
        rules = {}
        for m in votes:
            base = m.split("-")[0]
            mode = "majority" if m.endswith("MV") else "weighted"
            try:
                if base not in rules:
                    rules[base] = classify.fit_rule(_RULE_OF[base], Xall, yall, tc.gamma)
                pred = [classify.vote_classify(rules[base], s, mode) for s in test.sets]
                errors[m] = _error_rate(pred, truth)
            except Exception as exc:
                failures[m] = f"{type(exc).__name__}: {exc}"
    return errors, failures, r_hat, p_value


def run_benchmark(config: SimulationConfig, methods=None, train_config: TrainConfig | None = None,
                  threads: int = 1) -> BenchmarkReport:
    """Misclassification rates of each method over ``config.replications`` fresh datasets.

    Replication ``i`` uses RNG stream ``(seed, i)`` for data and permutation
    seed ``train_config.seed + i``, so results do not depend on ``threads``.
    Test sets smaller than ``r_hat + 1`` are zero-padded instead of dropped.
    """
    methods = [_canonical(m) for m in (methods or METHODS)]
    reps = range(config.replications)
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda i: run_replication(config, methods, i, train_config), reps))
    else:
        results = [run_replication(config, methods, i, train_config) for i in reps]
    errors = {m: [] for m in methods}
    failures = {m: [] for m in methods}
    r_hats, pvals = [], []
    for i, (err, fail, r_hat, pv) in enumerate(results):
        for m in methods:
            errors[m].append(err.get(m, float("nan")))
            if m in fail:
                failures[m].append(f"replication {i}: {fail[m]}")
        r_hats.append(r_hat)
        pvals.append(pv)
    cfg = {"simulation": asdict(config), "train": asdict(train_config or TrainConfig()), "methods": methods}
    return BenchmarkReport(cfg, methods, errors, failures, r_hats, pvals)
