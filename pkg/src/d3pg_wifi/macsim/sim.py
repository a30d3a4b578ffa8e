"""Saturated single-BSS DCF simulator with per-station CW and A-MPDU control."""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError, RangeError, ShapeError
from . import kernel as K

CW_LADDER = (15, 31, 63, 127, 255, 511, 1023)


@dataclass(frozen=True)
class SimConfig:
    n_stas: int = 8
    slot_us: float = 9.0
    sifs_us: float = 16.0
    difs_us: float = 34.0
    ack_us: float = 28.0
    ack_timeout_us: float = 44.0
    preamble_us: float = 40.0
    phy_rate_mbps: float = 1000.0
    payload_bytes: int = 1448
    mpdu_overhead_bytes: int = 34
    cw_min: int = 15
    cw_max: int = 1023
    max_agg: int = 256
    beb_agg: int = 64
    per_mpdu_error_prob: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_stas < 0:
            raise ConfigError(f"n_stas must be >= 0, got {self.n_stas}")
        for name in ("slot_us", "sifs_us", "difs_us", "ack_us", "ack_timeout_us",
                     "preamble_us", "phy_rate_mbps"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.payload_bytes < 1 or self.mpdu_overhead_bytes < 0:
            raise ConfigError("payload must be >= 1 byte and overhead >= 0")
        if not 0 <= self.cw_min <= self.cw_max:
            raise ConfigError("need 0 <= cw_min <= cw_max")
        if self.max_agg < 1 or not 1 <= self.beb_agg <= self.max_agg:
            raise ConfigError("need 1 <= beb_agg <= max_agg")
        if not 0.0 <= self.per_mpdu_error_prob < 1.0:
            raise ConfigError("per_mpdu_error_prob must lie in [0, 1)")

    def replace(self, **changes) -> "SimConfig":
        return SimConfig(**{**asdict(self), **changes})

    @property
    def mpdu_us(self) -> float:
        return (self.payload_bytes + self.mpdu_overhead_bytes) * 8 / self.phy_rate_mbps


def ppdu_duration(length: int, config: SimConfig) -> float:
    """Airtime in µs of a PPDU carrying ``length`` aggregated MPDUs."""
    if not 1 <= length <= config.max_agg:
        raise RangeError(f"aggregation length {length} outside [1, {config.max_agg}]")
    return config.preamble_us + length * config.mpdu_us


@dataclass
class PeriodMetrics:
    duration_us: float
    idle_us: float
    busy_us: float
    throughput_mbps: float
    delivered_mpdus: int
    tx_count: np.ndarray
    ack_count: np.ndarray
    collision_count: int
    success_count: int
    error_loss_count: int
    access_delay_sum_us: float
    idle_slots: int
    events: int
    duration_ns: int = 0
    idle_ns: int = 0
    busy_ns: int = 0

    @property
    def mean_access_delay_ms(self) -> float:
        if self.success_count == 0:
            return float("nan")
        return self.access_delay_sum_us / self.success_count / 1000.0

    @property
    def transmission_events(self) -> int:
        return self.collision_count + self.success_count + self.error_loss_count

    CSV_FIELDS = ("duration_us", "idle_us", "busy_us", "throughput_mbps", "delivered_mpdus",
                  "collision_count", "success_count", "error_loss_count",
                  "mean_access_delay_ms", "tx_total", "ack_total")

    def csv_row(self) -> dict:
        row = {name: getattr(self, name) for name in self.CSV_FIELDS[:-2]}
        row["tx_total"] = int(self.tx_count.sum())
        row["ack_total"] = int(self.ack_count.sum())
        return row


@dataclass
class MacControl:
    cw: np.ndarray
    agg_len: np.ndarray

    def __post_init__(self):
        self.cw = np.asarray(self.cw, dtype=np.int64)
        self.agg_len = np.asarray(self.agg_len, dtype=np.int64)
        if self.cw.shape != self.agg_len.shape or self.cw.ndim != 1:
            raise ShapeError("cw and agg_len must be 1-D arrays of equal length")


class Simulator:
    """Slotted DCF engine. One instance per independent run."""

    def __init__(self, config: SimConfig, seed: int | None = None, trace_path=None,
                 uniform_block: int = 1 << 16):
        self.config = config
        self.seed = config.seed if seed is None else seed
        self._rng = np.random.default_rng(self.seed)
        n = config.n_stas
        self._block = max(uniform_block, 4 * (n + config.max_agg))
        self._uniforms = self._rng.random(self._block)
        self._clock = np.zeros(K.N_CLOCK, dtype=np.int64)
        self._params = np.zeros(K.N_PARAMS, dtype=np.float64)
        self._params[K.P_SLOT] = round(config.slot_us * 1000)
        self._params[K.P_SIFS] = round(config.sifs_us * 1000)
        self._params[K.P_DIFS] = round(config.difs_us * 1000)
        self._params[K.P_ACK] = round(config.ack_us * 1000)
        self._params[K.P_ACK_TIMEOUT] = round(config.ack_timeout_us * 1000)
        self._params[K.P_PREAMBLE] = config.preamble_us * 1000
        self._params[K.P_MPDU] = config.mpdu_us * 1000
        self._params[K.P_CW_MIN] = config.cw_min
        self._params[K.P_CW_MAX] = config.cw_max
        self._params[K.P_SUCCESS_PROB] = 1.0 - config.per_mpdu_error_prob

        self.cw = np.full(n, config.cw_min, dtype=np.int64)
        self.stage = np.zeros(n, dtype=np.int64)
        self.controlled = np.zeros(n, dtype=np.int64)
        self.agg = np.full(n, config.beb_agg, dtype=np.int64)
        self.hol_ns = np.zeros(n, dtype=np.int64)
        self.counter = self._draw_backoff(self.cw)

        self._trace_file = None
        self._trace_writer = None
        self._trace = np.zeros((0, 4), dtype=np.int64)
        if trace_path is not None:
            self._trace_file = open(trace_path, "w", newline="")
            self._trace_writer = csv.writer(self._trace_file)
            self._trace_writer.writerow(["slot", "outcome", "sta", "L"])
            self._trace = np.zeros((4096, 4), dtype=np.int64)

    @property
    def now_us(self) -> float:
        return self._clock[K.C_NOW] / 1000.0

    def _take(self, k: int) -> np.ndarray:
        cur = self._clock[K.C_CURSOR]
        if cur + k > self._uniforms.shape[0]:
            self._refill()
            cur = 0
        out = self._uniforms[cur:cur + k]
        self._clock[K.C_CURSOR] = cur + k
        return out

    def _refill(self):
        cur = self._clock[K.C_CURSOR]
        self._uniforms = np.concatenate([self._uniforms[cur:], self._rng.random(self._block)])
        self._clock[K.C_CURSOR] = 0

    def _draw_backoff(self, cw: np.ndarray) -> np.ndarray:
        u = self._take(cw.shape[0])
        return (u * (cw + 1)).astype(np.int64)

    def apply_control(self, control: MacControl) -> None:
        n = self.config.n_stas
        if control.cw.shape != (n,):
            raise ShapeError(f"control covers {control.cw.shape[0]} STAs, simulator has {n}")
        if not np.isin(control.cw, CW_LADDER).all():
            raise RangeError(f"CW values must come from {CW_LADDER}")
        if control.agg_len.min(initial=1) < 1 or control.agg_len.max(initial=1) > self.config.max_agg:
            raise RangeError(f"aggregation length outside [1, {self.config.max_agg}]")
        self.controlled[:] = 1
        self.cw[:] = control.cw
        self.agg[:] = control.agg_len
        self.stage[:] = 0
        self.counter[:] = self._draw_backoff(self.cw)

    def run_for(self, duration_us: float) -> PeriodMetrics:
        if not duration_us > 0:
            raise RangeError("duration must be positive")
        n = self.config.n_stas
        start = int(self._clock[K.C_NOW])
        end = start + int(round(duration_us * 1000))
        tx = np.zeros(n, dtype=np.int64)
        ack = np.zeros(n, dtype=np.int64)
        acc = np.zeros(K.N_ACC, dtype=np.int64)
        while True:
            status = K.run_slots(self.counter, self.cw, self.stage, self.controlled, self.agg,
                                 self.hol_ns, tx, ack, self._uniforms, self._clock, self._params,
                                 end, acc, self._trace)
            if status == K.DONE:
                break
            if status == K.NEED_UNIFORMS:
                self._refill()
            else:
                self._flush_trace()
        self._flush_trace()
        duration_ns = end - start
        delivered = int(acc[K.A_DELIVERED])
        return PeriodMetrics(
            duration_us=duration_ns / 1000.0,
            idle_us=acc[K.A_IDLE_NS] / 1000.0,
            busy_us=acc[K.A_BUSY_NS] / 1000.0,
            throughput_mbps=delivered * self.config.payload_bytes * 8 * 1000.0 / duration_ns,
            delivered_mpdus=delivered,
            tx_count=tx,
            ack_count=ack,
            collision_count=int(acc[K.A_COLLISIONS]),
            success_count=int(acc[K.A_SUCCESSES]),
            error_loss_count=int(acc[K.A_ERROR_LOSSES]),
            access_delay_sum_us=acc[K.A_DELAY_SUM_NS] / 1000.0,
            idle_slots=int(acc[K.A_IDLE_SLOTS]),
            events=int(acc[K.A_EVENTS]),
            duration_ns=int(duration_ns),
            idle_ns=int(acc[K.A_IDLE_NS]),
            busy_ns=int(acc[K.A_BUSY_NS]),
        )

    def _flush_trace(self):
        rows = int(self._clock[K.C_TRACE_N])
        if self._trace_writer is not None and rows:
            names = ("idle", "success", "collision", "error_loss")
            for slot, outcome, sta, length in self._trace[:rows]:
                self._trace_writer.writerow([slot, names[outcome], sta, length])
        self._clock[K.C_TRACE_N] = 0

    def close(self):
        if self._trace_file is not None:
            self._trace_file.close()
            self._trace_file = None
            self._trace_writer = None
            self._trace = np.zeros((0, 4), dtype=np.int64)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def sim_new(config: SimConfig, seed: int | None = None) -> Simulator:
    return Simulator(config, seed)


def write_metrics_csv(path, metrics: list[PeriodMetrics]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=("period",) + PeriodMetrics.CSV_FIELDS)
        writer.writeheader()
        for i, m in enumerate(metrics):
            writer.writerow({"period": i, **m.csv_row()})
