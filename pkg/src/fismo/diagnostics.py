"""Per-step metrics, the convergence-rate estimator, condition-number
summaries, and numeric audits of the descent/tracking lemmas over recorded
trajectories.

Audits recompute every quantity from raw state snapshots (weights,
gradients, preconditioners, momentum); nothing is trusted from logged
scalars.
"""

import json
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from . import matops
from .errors import InsufficientData, InvalidInput

# Frozen empirical cap for the preconditioner drift ratio ||dP^-1/2||_2 / eta
# (measured ~3.4 on bounded-gradient runs across eta in {1e-1,1e-2,1e-3}).
DRIFT_RATIO_CAP = 10.0

# Closed-form momentum recomputation is O(T^2); audit the first this-many steps.
MOMENTUM_CHECK_STEPS = 50


@dataclass(frozen=True)
class MetricsRecord:
    """One row of run metrics.

    Gradient norms describe the full-data gradient at the pre-step iterate;
    loss is the full-data loss after the step. update_kappa averages the
    per-matrix condition numbers of the step taken. kpq and
    momentum_tracking are present only for optimizers that define them.
    """

    step: int
    loss: float
    grad_nuclear: float
    grad_frobenius: float
    update_kappa: float
    kpq: Optional[float] = None
    momentum_tracking: Optional[float] = None
    wall_ns: int = 0


def validate_records(records: Sequence[MetricsRecord]):
    """Check the MetricsRecord invariants over one run."""
    last = None
    for r in records:
        if last is not None and r.step <= last:
            raise InvalidInput(f"steps must be strictly increasing, got {r.step} after {last}")
        last = r.step
        if not (r.grad_nuclear >= r.grad_frobenius >= 0.0):
            raise InvalidInput(f"step {r.step}: grad_nuclear >= grad_frobenius >= 0 violated")
    return records


def summarize_gradients(grads):
    """(nuclear, frobenius) norms of a tuple of per-parameter gradients.

    1-D parameters are treated as single-column matrices (their nuclear,
    spectral, and Frobenius norms coincide).
    """
    nuclear = 0.0
    fro_sq = 0.0
    for g in grads:
        arr = np.asarray(g, dtype=np.float64)
        if arr.ndim == 1:
            nuclear += float(np.linalg.norm(arr))
        else:
            nuclear += matops.norm(arr, "nuclear")
        fro_sq += float(np.sum(arr * arr))
    return nuclear, math.sqrt(fro_sq)


# ------------------------------------------------------------------ rate fit

def rate_fit(runs: Sequence[Sequence[MetricsRecord]]) -> float:
    """Least-squares slope of log(run-average grad_nuclear) vs log(T).

    Runs must cover at least 4 distinct horizons T (with the step size of
    each run scaled as C / sqrt(T) by the caller).
    """
    horizons = []
    averages = []
    for records in runs:
        if not records:
            raise InsufficientData("rate_fit: empty run")
        horizons.append(len(records))
        averages.append(float(np.mean([r.grad_nuclear for r in records])))
    if len(set(horizons)) < 4:
        raise InsufficientData(
            f"rate_fit needs >= 4 distinct horizons, got {sorted(set(horizons))}"
        )
    slope = np.polyfit(np.log(horizons), np.log(averages), 1)[0]
    return float(slope)


# ------------------------------------------------------------- kappa summary

def kappa_summary(records_per_optimizer: dict) -> dict:
    """Median per-step update condition number for each optimizer.

    Values may be a single run or a list of runs; every optimizer must
    supply runs of one common length. Returns {name: median kappa}.
    """
    lengths = set()
    medians = {}
    for name, runs in records_per_optimizer.items():
        if runs and isinstance(runs[0], MetricsRecord):
            runs = [runs]
        kappas = []
        for records in runs:
            lengths.add(len(records))
            kappas.extend(r.update_kappa for r in records)
        if not kappas:
            raise InvalidInput(f"{name}: no records")
        # skipped steps (no movement) record nan kappas and do not contribute
        medians[name] = float(np.nanmedian(kappas))
    if len(lengths) > 1:
        raise InvalidInput(f"mismatched run lengths {sorted(lengths)}")
    return medians


def ordering_holds(medians: dict, order: Sequence[str], min_ratio: float = 1.0) -> bool:
    """True when medians are strictly decreasing along `order`, with each
    adjacent pair separated by at least `min_ratio`."""
    values = [medians[name] for name in order]
    return all(a > b and a >= min_ratio * b for a, b in zip(values, values[1:]))


# ------------------------------------------------------------------- audits

@dataclass(frozen=True)
class Snapshot:
    """Full optimizer state around one step, for audits."""

    step: int
    w_before: np.ndarray
    w_after: np.ndarray
    grad: np.ndarray          # the (mini-batch) gradient the step consumed
    momentum: np.ndarray      # M_t, whitened space
    p: np.ndarray
    q: np.ndarray
    eta: float
    beta: float


@dataclass(frozen=True)
class LemmaResult:
    lemma_id: str
    passed: bool
    worst_slack: float
    step_of_worst: int


@dataclass(frozen=True)
class AuditReport:
    results: tuple
    metadata: dict

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_json(self) -> str:
        payload = {
            "metadata": self.metadata,
            "results": [
                {
                    "lemma_id": r.lemma_id,
                    "pass": r.passed,
                    "worst_slack": r.worst_slack,
                    "step_of_worst": r.step_of_worst,
                }
                for r in self.results
            ],
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def _spd_inv_sqrt_or_none(a):
    w, v = np.linalg.eigh(0.5 * (a + a.T))
    if w[0] <= 0.0:
        return None, float(w[0])
    return (v / np.sqrt(w)) @ v.T, float(w[0])


def _worst(slacks, bigger_is_better=True):
    arr = np.asarray(slacks)
    idx = int(np.argmin(arr)) if bigger_is_better else int(np.argmax(arr))
    return float(arr[idx]), idx


def lemma_audit(snapshots: Sequence[Snapshot], problem) -> AuditReport:
    """Audit a recorded single-matrix trajectory against the paper's lemmas.

    Checks, with all quantities recomputed from the snapshots:
      lemma1_descent     one-step descent bound (needs problem.smoothness_L)
      pd_preconditioners P, Q positive definite at every step
      kpq_bounds         K_PQ within [1/sqrt(mn), observed max]
      drift_ratio        ||P_t^-1/2 - P_{t-1}^-1/2||_2 / eta under the cap
      ema_tracking       summed momentum tracking error bound
      momentum_closed_form  recurrence equals the explicit geometric sum
    """
    if not snapshots:
        raise InsufficientData("lemma_audit: no snapshots")
    steps = [s.step for s in snapshots]
    if steps != list(range(steps[0], steps[0] + len(steps))):
        raise InsufficientData("lemma_audit: snapshots must cover consecutive steps")
    if problem.smoothness_L is None:
        raise InvalidInput("lemma_audit requires a problem with declared smoothness_L")

    m, n = snapshots[0].w_before.shape
    r = min(m, n)
    L = problem.smoothness_L
    eta = snapshots[0].eta
    beta = snapshots[0].beta

    pd_slacks = []
    kpq_values = []
    lemma1_slacks = []
    lemma1_whitened_slacks = []
    tracking_norms = []
    whitened = []
    p_inv_sqrts = []
    for snap in snapshots:
        p_is, p_min = _spd_inv_sqrt_or_none(snap.p)
        q_is, q_min = _spd_inv_sqrt_or_none(snap.q)
        pd_slacks.append(min(p_min, q_min))
        if p_is is None or q_is is None:
            kpq_values.append(math.nan)
            whitened.append(None)
            p_inv_sqrts.append(None)
            lemma1_slacks.append(-math.inf)
            lemma1_whitened_slacks.append(-math.inf)
            tracking_norms.append(math.nan)
            continue
        p_inv_sqrts.append(p_is)
        kpq_values.append(float(np.linalg.eigvalsh(p_is)[-1] * np.linalg.eigvalsh(q_is)[-1]))
        g_tilde = p_is @ snap.grad @ q_is
        whitened.append(g_tilde)
        tracking = matops.norm(g_tilde - snap.momentum, "nuclear")
        tracking_norms.append(tracking)

        full_grad = problem.full_gradient((snap.w_before,))[0]
        loss_before = problem.loss((snap.w_before,))
        loss_after = problem.loss((snap.w_after,))
        k_t = kpq_values[-1]
        noise = matops.norm(full_grad - snap.grad, "nuclear")
        common = 2.0 * eta * k_t * noise + 2.0 * eta * tracking + 0.5 * L * eta**2 * r * k_t**2
        # the descent lemma as stated multiplies the full-gradient nuclear
        # norm by K_PQ; that substitution is not implied by its own proof
        # chain (K_PQ upper-bounds the whitening, but the term is negated),
        # so the whitened-gradient variant is audited alongside
        rhs = loss_before - eta * k_t * matops.norm(full_grad, "nuclear") + common
        lemma1_slacks.append(rhs - loss_after)
        whitened_full = p_is @ full_grad @ q_is
        rhs_w = loss_before - eta * matops.norm(whitened_full, "nuclear") + common
        lemma1_whitened_slacks.append(rhs_w - loss_after)

    results = []
    worst, idx = _worst(lemma1_slacks)
    results.append(LemmaResult("lemma1_descent", worst >= 0.0, worst, steps[idx]))

    worst, idx = _worst(lemma1_whitened_slacks)
    results.append(LemmaResult("lemma1_descent_whitened", worst >= 0.0, worst, steps[idx]))

    worst, idx = _worst(pd_slacks)
    results.append(LemmaResult("pd_preconditioners", worst > 0.0, worst, steps[idx]))

    kpq_floor = 1.0 / math.sqrt(m * n)
    kpq_ok = all(not math.isnan(k) and k >= kpq_floor for k in kpq_values)
    finite = [k for k in kpq_values if not math.isnan(k)]
    if finite:
        worst, idx = _worst([k - kpq_floor for k in finite])
    else:
        worst, idx = -math.inf, 0
    results.append(LemmaResult("kpq_bounds", kpq_ok, worst, steps[idx]))

    drift_ratios = [0.0]
    for prev, cur in zip(p_inv_sqrts, p_inv_sqrts[1:]):
        if prev is None or cur is None:
            drift_ratios.append(math.inf)
        else:
            drift_ratios.append(float(np.linalg.norm(cur - prev, 2)) / eta)
    worst, idx = _worst([DRIFT_RATIO_CAP - d for d in drift_ratios])
    results.append(LemmaResult("drift_ratio", worst >= 0.0, worst, steps[idx]))

    if any(w is None for w in whitened):
        results.append(LemmaResult("ema_tracking", False, -math.inf, steps[0]))
        results.append(LemmaResult("momentum_closed_form", False, -math.inf, steps[0]))
    else:
        diff_sum = sum(
            matops.norm(b - a, "nuclear") for a, b in zip(whitened, whitened[1:])
        )
        sup = max(matops.norm(w, "nuclear") for w in whitened)
        bound = beta / (1.0 - beta) * (diff_sum + sup)
        total = float(sum(tracking_norms))
        results.append(LemmaResult("ema_tracking", total <= bound + 1e-9, bound - total, steps[-1]))

        errs = []
        check_until = min(len(snapshots), MOMENTUM_CHECK_STEPS)
        for t in range(check_until):
            closed = np.zeros((m, n))
            for s in range(t + 1):
                closed += (1.0 - beta) * beta ** (t - s) * whitened[s]
            errs.append(float(np.max(np.abs(closed - snapshots[t].momentum))))
        worst, idx = _worst([1e-10 - e for e in errs])
        results.append(LemmaResult("momentum_closed_form", worst >= 0.0, worst, steps[idx]))

    metadata = {
        "steps": len(snapshots),
        "shape": [m, n],
        "eta": eta,
        "beta": beta,
        "smoothness_L": L,
        "kpq_max_observed": max(finite) if finite else None,
        "drift_cap": DRIFT_RATIO_CAP,
        "note": "update_kappa averaging: per-step arithmetic mean over matrix "
        "parameters, median across steps",
    }
    return AuditReport(results=tuple(results), metadata=metadata)
