"""Experiment sweeps over seeded channel realizations.

Every row of a :class:`ResultTable` is one (sweep value, method, seed)
triple. Seeds follow ``base_seed + sweep_index + replicate``.

Receive SNR (used by every sweep that fixes an SNR) is the total received
power over the total noise power at user 0, with the transmit power spread
evenly over the ``n_T`` antennas and ``N`` subcarriers::

    SNR = P * mean_n ||H_0[n]||_F^2 / (N * n_T * n_R0 * sigma^2)

where ``sigma^2`` is the per-subcarrier noise power. The transmit power of
each realization is scaled to hit the requested SNR, so ``P`` does not
depend on ``N``.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .. import baselines
from ..allocator import AllocationProblem, maximize_sum_rate, minimize_energy
from ..allocator.core import TIE_TOL
from ..channel import ScenarioConfig, dbm_to_watts, generate_channels, watts_to_dbm
from ..duality import bc_to_mac_channel
from ..errors import InputError, McnomaError

__all__ = [
    "KINDS",
    "METHODS",
    "ExperimentSpec",
    "ResultRow",
    "ResultTable",
    "receive_snr",
    "power_for_snr",
    "run_experiment",
    "seed_for",
]

log = logging.getLogger(__name__)

KINDS = ("snr_sweep", "nt_sweep", "user_sweep", "subcarrier_sweep", "distance_sweep", "timeshare_demo")
METHODS = ("proposed", "oma", "noma", "mc_noma")
MODES = ("sum_rate", "energy")
OMA_VARIANTS = ("linear", "partition")
COLOCATED_AZIMUTH = 0.0


@dataclass(frozen=True)
class ExperimentSpec:
    """One sweep.

    Parameters
    ----------
    kind : str
        One of :data:`KINDS`. The sweep values are receive SNR in dB
        (``snr_sweep``, ``timeshare_demo``), BS antenna count
        (``nt_sweep``), user count (``user_sweep``), subcarrier count
        (``subcarrier_sweep``) or user distance in metres applied to every
        user (``distance_sweep``).
    base : ScenarioConfig
    values : tuple
        Sorted, non-empty sweep values.
    methods : tuple
        Subset of :data:`METHODS`.
    num_seeds : int
    base_seed : int
    snr_db : float or None
        Receive SNR for sweeps whose axis is not SNR. ``None`` keeps the
        scenario's transmit power.
    oma_variant : {"linear", "partition"}
    oma_power_dbm : float
        Per-user OMA power in the distance sweep, whose OMA rates become
        the other methods' rate floors.
    colocated : bool or None
        Put every user at the same bearing. ``None`` means "only for
        ``user_sweep``".
    tie_tol : float
        Relative multiplier tolerance for time-sharing clusters.
    """

    kind: str
    base: ScenarioConfig = field(default_factory=ScenarioConfig)
    values: tuple = ()
    methods: tuple = METHODS
    num_seeds: int = 1
    base_seed: int = 0
    snr_db: float | None = 30.0
    oma_variant: str = "linear"
    oma_power_dbm: float = 20.0
    colocated: bool | None = None
    tie_tol: float = TIE_TOL

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        values = tuple(self.values)
        if not values:
            raise InputError("sweep values must be non-empty")
        if list(values) != sorted(values):
            raise InputError(f"sweep values must be sorted, got {values}")
        if self.kind in ("nt_sweep", "user_sweep", "subcarrier_sweep"):
            if any(int(v) != v or v < 1 for v in values):
                raise InputError(f"{self.kind} values must be positive integers")
            values = tuple(int(v) for v in values)
        else:
            values = tuple(float(v) for v in values)
        object.__setattr__(self, "values", values)
        methods = tuple(self.methods)
        if not methods:
            raise InputError("method subset must be non-empty")
        bad = [m for m in methods if m not in METHODS]
        if bad:
            raise InputError(f"unknown methods {bad}; expected a subset of {METHODS}")
        # canonical order keeps output independent of how the list was typed
        object.__setattr__(self, "methods", tuple(m for m in METHODS if m in methods))
        if int(self.num_seeds) < 1:
            raise InputError("num_seeds must be >= 1")
        object.__setattr__(self, "num_seeds", int(self.num_seeds))
        if self.oma_variant not in OMA_VARIANTS:
            raise InputError(f"oma_variant must be one of {OMA_VARIANTS}")
        if isinstance(self.base, dict):
            object.__setattr__(self, "base", ScenarioConfig.from_dict(self.base))
        if self.kind == "distance_sweep" and "oma" not in self.methods:
            raise InputError("distance_sweep needs the oma method: its rates set the floors")

    @property
    def mode(self):
        return "energy" if self.kind == "distance_sweep" else "sum_rate"

    @property
    def is_colocated(self):
        return self.kind == "user_sweep" if self.colocated is None else bool(self.colocated)

    def scenario_at(self, index, replicate):
        """Scenario for sweep point ``index`` and seed replicate ``replicate``."""
        value = self.values[index]
        cfg = self.base.with_(seed=seed_for(self, index, replicate))
        if self.kind == "nt_sweep":
            cfg = cfg.with_(bs_antennas=value, user_antennas=(1,) * cfg.num_users)
        elif self.kind == "user_sweep":
            cfg = cfg.with_(num_users=value)
        elif self.kind == "subcarrier_sweep":
            cfg = cfg.with_(num_subcarriers=value)
        elif self.kind == "distance_sweep":
            cfg = cfg.with_(distances=(value,) * cfg.num_users)
        if self.is_colocated:
            cfg = cfg.with_(user_azimuths=(COLOCATED_AZIMUTH,) * cfg.num_users)
        return cfg

    def snr_at(self, index):
        if self.kind in ("snr_sweep", "timeshare_demo"):
            return self.values[index]
        return self.snr_db

    def to_dict(self):
        return {
            "kind": self.kind,
            "values": list(self.values),
            "methods": list(self.methods),
            "num_seeds": self.num_seeds,
            "base_seed": self.base_seed,
            "snr_db": self.snr_db,
            "oma_variant": self.oma_variant,
            "oma_power_dbm": self.oma_power_dbm,
            "colocated": self.colocated,
            "tie_tol": self.tie_tol,
            "scenario": self.base.to_dict(),
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        scenario = data.pop("scenario", None) or {}
        known = {"kind", "values", "methods", "num_seeds", "base_seed", "snr_db", "oma_variant",
                 "oma_power_dbm", "colocated", "tie_tol"}
        unknown = set(data) - known
        if unknown:
            raise InputError(f"unknown experiment keys: {sorted(unknown)}")
        base = scenario if isinstance(scenario, ScenarioConfig) else ScenarioConfig.from_dict(scenario)
        return cls(base=base, **data)


def seed_for(spec, index, replicate):
    return int(spec.base_seed) + int(index) + int(replicate)


@dataclass(frozen=True, eq=False)
class ResultRow:
    """Outcome of one method on one realization.

    Rates are in bits/s/Hz (band average) and Mbps; ``energy`` is the
    total transmit power in watts. Failed rows carry ``status="error"``,
    the error text and NaN numbers.
    """

    sweep_value: float
    method: str
    seed: int
    status: str = "ok"
    error: str = ""
    user_rates: tuple = ()
    user_rates_mbps: tuple = ()
    energy: float = float("nan")
    transmit_power: float = float("nan")
    power_ratio_to_oma: float = float("nan")
    decoding_order: tuple = ()
    block_fractions: tuple = ()
    block_orders: tuple = ()
    kkt_residual: float = float("nan")
    per_tone: tuple = ()

    @property
    def sum_rate(self):
        return float(np.sum(self.user_rates)) if self.user_rates else float("nan")

    @property
    def sum_rate_mbps(self):
        return float(np.sum(self.user_rates_mbps)) if self.user_rates_mbps else float("nan")

    @property
    def energy_dbm(self):
        if not self.energy > 0:
            return float("nan") if np.isnan(self.energy) else float("-inf")
        return float(watts_to_dbm(self.energy))

    @property
    def ok(self):
        return self.status == "ok"


@dataclass(frozen=True, eq=False)
class ResultTable:
    spec: ExperimentSpec
    rows: tuple

    @property
    def failures(self):
        return tuple(r for r in self.rows if not r.ok)

    def select(self, method=None, sweep_value=None):
        return tuple(
            r for r in self.rows
            if (method is None or r.method == method) and (sweep_value is None or r.sweep_value == sweep_value)
        )

    def mean(self, method, attribute="sum_rate"):
        """Per-sweep-value mean of ``attribute`` over successful rows of ``method``."""
        out = []
        for v in self.spec.values:
            vals = [getattr(r, attribute) for r in self.select(method, v) if r.ok]
            out.append(float(np.mean(vals)) if vals else float("nan"))
        return np.array(out)


def receive_snr(channels, transmit_power):
    """Linear receive SNR at user 0 for ``transmit_power`` watts (BC channels)."""
    H0 = channels.user_block(0)
    gain = float(np.mean(np.sum(np.abs(H0) ** 2, axis=(1, 2))))
    noise = float(np.mean(np.trace(channels.noise_per_subcarrier(), axis1=1, axis2=2).real))
    nr0 = channels.user_dims[0]
    noise0 = noise / channels.receive_dim * nr0
    return transmit_power * gain / (channels.num_subcarriers * channels.bs_dim * noise0)


def power_for_snr(channels, snr_db):
    """Transmit power (watts) giving receive SNR ``snr_db`` at user 0."""
    unit = receive_snr(channels, 1.0)
    if not unit > 0:
        raise InputError("user 0 has an all-zero channel; receive SNR is undefined")
    return float(10.0 ** (snr_db / 10.0) / unit)


def _user_rates(rates, bandwidth):
    return tuple(float(x) for x in rates.spectral_efficiency()), tuple(float(x) for x in rates.to_bps(bandwidth) / 1e6)


def _solution_row(value, method, seed, sol, bandwidth, power, keep_tones):
    se, mbps = _user_rates(sol.rates, bandwidth)
    fractions, orders, tones = (), (), ()
    schedule = getattr(sol, "schedule", None)
    if schedule is not None:
        fractions = tuple(float(b.fraction) for b in schedule.blocks)
        orders = tuple(tuple(b.order.sequence) for b in schedule.blocks)
        if keep_tones:
            tones = tuple(np.asarray(b.per_subcarrier, float) for b in schedule.blocks)
    elif keep_tones:
        tones = (np.asarray(sol.rates.per_subcarrier, float),)
    return ResultRow(
        sweep_value=value,
        method=method,
        seed=seed,
        user_rates=se,
        user_rates_mbps=mbps,
        energy=float(sol.total_power),
        transmit_power=float(power),
        decoding_order=tuple(sol.order.sequence) if hasattr(sol, "order") else (),
        block_fractions=fractions,
        block_orders=orders,
        kkt_residual=float(getattr(sol, "kkt_residual", float("nan"))),
        per_tone=tones,
    )


def _oma_row(value, seed, res, bandwidth, power):
    se, mbps = _user_rates(res.rates, bandwidth)
    return ResultRow(value, "oma", seed, user_rates=se, user_rates_mbps=mbps,
                     energy=float(res.total_power), transmit_power=float(power))


def _error_row(value, method, seed, exc):
    return ResultRow(value, method, seed, status="error", error=f"{type(exc).__name__}: {exc}")


def _run_sum_rate(spec, value, seed, mac, power, bandwidth):
    keep = spec.kind == "timeshare_demo"
    rows = []
    for method in spec.methods:
        try:
            if method == "proposed":
                sol = maximize_sum_rate(mac, power, tie_tol=spec.tie_tol)
            elif method == "noma":
                sol = baselines.noma_allocate(mac, power)
            elif method == "mc_noma":
                sol = baselines.mc_noma_allocate(mac, power)
            else:
                res = baselines.oma_allocate(mac, power, variant=spec.oma_variant)
                rows.append(_oma_row(value, seed, res, bandwidth, power))
                continue
            rows.append(_solution_row(value, method, seed, sol, bandwidth, power, keep))
        except (McnomaError, np.linalg.LinAlgError) as exc:
            log.warning("%s failed at %s=%s seed %d: %s", method, spec.kind, value, seed, exc)
            rows.append(_error_row(value, method, seed, exc))
    return rows


def _run_energy(spec, value, seed, mac, bandwidth):
    """OMA at a fixed per-user power; the others meet its rates with least power."""
    per_user = float(dbm_to_watts(spec.oma_power_dbm))
    rows = []
    try:
        res = baselines.oma_allocate(mac, per_user_power=per_user, variant=spec.oma_variant)
    except (McnomaError, np.linalg.LinAlgError) as exc:
        return [_error_row(value, m, seed, exc) for m in spec.methods]
    oma_power = float(res.total_power)
    floors = res.rates.totals
    oma_row = _oma_row(value, seed, res, bandwidth, oma_power)
    rows.append(replace(oma_row, power_ratio_to_oma=1.0))
    for method in spec.methods:
        if method == "oma":
            continue
        try:
            if method == "proposed":
                sol = minimize_energy(AllocationProblem(mac, np.ones(mac.num_users), floors), tie_tol=spec.tie_tol)
            elif method == "noma":
                sol = baselines.noma_allocate(mac, min_rates=floors)
            else:
                sol = baselines.mc_noma_allocate(mac, min_rates=floors)
            row = _solution_row(value, method, seed, sol, bandwidth, sol.total_power, False)
            ratio = row.energy / oma_power if oma_power > 0 else float("nan")
            rows.append(replace(row, power_ratio_to_oma=ratio))
        except (McnomaError, np.linalg.LinAlgError) as exc:
            log.warning("%s failed at %s=%s seed %d: %s", method, spec.kind, value, seed, exc)
            rows.append(_error_row(value, method, seed, exc))
    order = {m: i for i, m in enumerate(spec.methods)}
    return sorted(rows, key=lambda r: order[r.method])


def _run_point(args):
    spec, index, replicate = args
    value = spec.values[index]
    cfg = spec.scenario_at(index, replicate)
    seed = cfg.seed
    try:
        bc = generate_channels(cfg)
        mac = bc_to_mac_channel(bc)
        snr = spec.snr_at(index)
        power = cfg.transmit_power_watts if snr is None else power_for_snr(bc, snr)
    except (McnomaError, np.linalg.LinAlgError) as exc:
        return [_error_row(value, m, seed, exc) for m in spec.methods]
    if spec.mode == "energy":
        return _run_energy(spec, value, seed, mac, cfg.bandwidth)
    return _run_sum_rate(spec, value, seed, mac, power, cfg.bandwidth)


def run_experiment(spec, *, workers=1):
    """Run every (sweep value, seed) point of ``spec``.

    Parameters
    ----------
    spec : ExperimentSpec
    workers : int
        Process count. Rows are assembled in canonical (value, seed,
        method) order whatever the completion order, so the table does not
        depend on ``workers``.

    Returns
    -------
    ResultTable
        Solver failures become ``status="error"`` rows; the run continues.
    """
    jobs = [(spec, i, r) for i in range(len(spec.values)) for r in range(spec.num_seeds)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_point, jobs))
    else:
        chunks = [_run_point(job) for job in jobs]
    rows = tuple(row for chunk in chunks for row in chunk)
    return ResultTable(spec, rows)
