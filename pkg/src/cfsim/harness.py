"""Experiment harness: setup pipeline, Monte Carlo loops, and CSV output.

Every random quantity derives from (master seed, purpose, setup index,
realization index), so results are independent of worker count and
schedule.  Rows are sorted canonically before writing, which makes the
CSV byte stable across parallelism levels.
"""

import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path

import numpy as np

from . import channel, clustering, coherent, dstbc, dstbc_analysis, precoding, training
from .config import SystemConfig
from .geometry import generate_snapshot
from .modulation import bit_error_table, detect_psk, psk_constellation

CSV_COLUMNS = (
    "run_id",
    "setup_seed",
    "realization_seed",
    "scheme",
    "precoder",
    "alpha_rad",
    "L",
    "K",
    "N",
    "L_k",
    "ue_id",
    "metric",
    "value",
)

# Substream purposes.  Keeping phases on their own stream lets paired runs
# at different alpha share channels, noise, and symbol draws.
_GEOMETRY, _NORM, _MOMENT, _REALIZATION = 1, 2, 3, 4
_CHANNELS, _PILOT_NOISE, _PHASES, _CONV_NOISE, _CONV_SYMBOLS, _DSTBC_NOISE, _DSTBC_SYMBOLS = (
    0,
    1,
    2,
    3,
    4,
    5,
    6,
)


def _rng(master_seed, *key):
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=key))


def _derived_seed(master_seed, *key) -> int:
    return int(np.random.SeedSequence(master_seed, spawn_key=key).generate_state(1)[0])


@dataclass
class SetupContext:
    """All realization-independent statistics of one network setup."""

    cfg: SystemConfig
    setup_index: int
    snapshot: object
    book: object
    stats: object
    cluster: object
    support: object
    norm_moments: object
    rho_per_ap: np.ndarray
    rho_per_ue: np.ndarray
    constellation: object
    bit_table: np.ndarray

    @classmethod
    def build(cls, cfg: SystemConfig, setup_index: int) -> "SetupContext":
        rng = _rng(cfg.seed, _GEOMETRY, setup_index)
        snapshot = generate_snapshot(cfg, rng)
        book = training.assign_pilots(snapshot.betas, cfg.tau_p)
        stats = training.pilot_statistics(
            snapshot.covariances, book, cfg.eta, cfg.tau_p, cfg.sigma2
        )
        cluster = clustering.build_clusters(snapshot.betas, cfg.L_k, cfg.K_max)
        support = None
        if cfg.precoder == "pmmse":
            support = precoding.pmmse_support(cluster, stats.err_cov, cfg.eta, cfg.sigma2)
        if cfg.precoder == "mr":
            norm_moments = precoding.mr_norm_moments(stats, cluster, cfg.eta, cfg.tau_p)
        else:
            norm_moments = precoding.sampled_norm_moments(
                stats,
                book,
                cluster,
                cfg.precoder,
                cfg.eta,
                cfg.sigma2,
                _rng(cfg.seed, _NORM, setup_index),
                cfg.norm_draws,
                support=support,
            )
        if cfg.resolved_power_alloc == "distributed":
            rho_per_ap = precoding.distributed_power(snapshot.betas, cluster, cfg.rho_max)
            rho_per_ue = rho_per_ap.sum(axis=1)
        else:
            rho_per_ue = precoding.fractional_power(
                snapshot.betas,
                cluster,
                norm_moments,
                cfg.rho_max,
                cfg.varsigma,
                cfg.kappa,
                cfg.zeta,
            )
            rho_per_ap = None
        return cls(
            cfg=cfg,
            setup_index=setup_index,
            snapshot=snapshot,
            book=book,
            stats=stats,
            cluster=cluster,
            support=support,
            norm_moments=norm_moments,
            rho_per_ap=rho_per_ap,
            rho_per_ue=rho_per_ue,
            constellation=psk_constellation(cfg.M_o),
            bit_table=bit_error_table(cfg.M_o),
        )

    # ---- precoding -----------------------------------------------------

    def precode(self, h_hat_batch) -> np.ndarray:
        """Directions plus statistical normalization for a batch of estimates."""
        cfg = self.cfg
        wbar = precoding.compute_directions(
            h_hat_batch,
            cfg.precoder,
            self.cluster,
            self.stats.err_cov,
            cfg.eta,
            cfg.sigma2,
            support=self.support,
        )
        if cfg.resolved_power_alloc == "distributed":
            return precoding.normalize_distributed(
                wbar, self.rho_per_ap, self.norm_moments, self.cluster
            )
        return precoding.normalize_centralized(
            wbar, self.rho_per_ue, self.norm_moments, self.cluster
        )

    def draw_estimate_batch(self, rng, batch):
        """Joint (channel, estimate) draws through the full pilot chain."""
        cfg = self.cfg
        z = channel.complex_normal(rng, (batch, cfg.K, cfg.L, cfg.N))
        h = np.einsum("klmn,bkln->bklm", self.snapshot.cov_sqrt, z)
        y = np.zeros((batch, cfg.tau_p, cfg.L, cfg.N), dtype=complex)
        amp = math.sqrt(cfg.tau_p * cfg.eta)
        for pilot in range(cfg.tau_p):
            users = self.book.users_of_pilot(pilot)
            if users.size:
                y[:, pilot] = amp * h[:, users].sum(axis=1)
        y += channel.complex_normal(rng, y.shape, cfg.sigma2)
        per_ue = y[:, self.book.q]  # (B, K, L, N)
        h_hat = np.einsum("klmn,bkln->bklm", self.stats.estimator, per_ue)
        return h, h_hat

    # ---- bound metrics ---------------------------------------------------

    def hardening_moments(self) -> coherent.HardeningMoments:
        """Analytic moments for distributed MR, sampled ones otherwise."""
        cfg = self.cfg
        if cfg.precoder == "mr" and cfg.resolved_power_alloc == "distributed":
            return coherent.mr_closed_form_moments(
                self.stats,
                self.snapshot.covariances,
                self.cluster,
                self.book,
                self.rho_per_ap,
                cfg.eta,
                cfg.tau_p,
            )
        rng = _rng(cfg.seed, _MOMENT, self.setup_index)

        def sample(batch):
            h, h_hat = self.draw_estimate_batch(rng, batch)
            w = self.precode(h_hat)
            g = np.einsum("bkln,biln->bikl", h.conj(), w)
            return g * self.cluster.a[None, :, None, :]

        return coherent.empirical_hardening_moments(sample, cfg.moment_draws)

    def bound_metrics(self, alphas, moments=None):
        """Hardening-bound SINR/SE per UE for each alpha.

        Returns {(scheme, alpha, metric): array of K values}.
        """
        cfg = self.cfg
        if moments is None:
            moments = self.hardening_moments()
        out = {}
        for alpha in alphas:
            sinr = coherent.sinr_hardening(
                moments,
                alpha,
                cfg.sigma2,
                include_self_term=not cfg.hardening_printed_form,
                nu=coherent.phase_coherence_factor(alpha, cfg.sinc_convention),
            )
            out[("conventional", alpha, "sinr_hardening")] = sinr
            out[("conventional", alpha, "se_hardening")] = coherent.se_from_sinr(
                sinr, cfg.tau_d, cfg.tau_c
            )
        return out

    # ---- transmission metrics --------------------------------------------

    def realization_streams(self, r):
        s = self.setup_index
        seed = self.cfg.seed
        return {
            "channels": _rng(seed, _REALIZATION, s, r, _CHANNELS),
            "pilot_noise": _rng(seed, _REALIZATION, s, r, _PILOT_NOISE),
            "phases": _rng(seed, _REALIZATION, s, r, _PHASES),
            "conv_noise": _rng(seed, _REALIZATION, s, r, _CONV_NOISE),
            "conv_symbols": _rng(seed, _REALIZATION, s, r, _CONV_SYMBOLS),
            "dstbc_noise": _rng(seed, _REALIZATION, s, r, _DSTBC_NOISE),
            "dstbc_symbols": _rng(seed, _REALIZATION, s, r, _DSTBC_SYMBOLS),
        }

    def draw_realization(self, r, alpha):
        """Channels, phases, estimates, and precoders for realization r."""
        cfg = self.cfg
        streams = self.realization_streams(r)
        h = channel.sample_channels(self.snapshot, streams["channels"]).h
        theta = channel.sample_phases(alpha, cfg.L, streams["phases"]).theta
        y = training.received_pilot(
            h,
            theta,
            self.book,
            cfg.eta,
            cfg.tau_p,
            cfg.sigma2,
            streams["pilot_noise"],
            cfg.pilot_phase_mode,
        )
        estimate = training.mmse_estimate(y, self.book, self.stats)
        w = self.precode(estimate.h_hat[None])[0]
        return h, theta, w, streams

    def transmission_metrics(
        self, schemes, alpha, n_realizations, with_bounds=True, with_ber=True
    ):
        """Per-UE aggregates over realizations: {(scheme, metric): array(K)}.

        BER pools bit errors over all realizations; the upper-bound SE
        averages the per-realization log terms.
        """
        cfg = self.cfg
        num_ues = cfg.K
        mask = self.cluster.a
        conv_err = np.zeros(num_ues, dtype=np.int64)
        conv_bits = np.zeros(num_ues, dtype=np.int64)
        dstbc_err = np.zeros(num_ues, dtype=np.int64)
        dstbc_bits = np.zeros(num_ues, dtype=np.int64)
        sinr_upper_acc = np.zeros(num_ues)
        log_upper_acc = np.zeros(num_ues)
        snr_cf_acc = np.zeros(num_ues)
        sinr_cf_acc = np.zeros(num_ues)

        run_dstbc = "dstbc" in schemes
        run_conv = "conventional" in schemes
        designs = dstbc.amicable_designs(cfg.L_k) if run_dstbc else None
        blocks = cfg.tau_d // cfg.L_k if run_dstbc else None

        for r in range(n_realizations):
            h, theta, w, streams = self.draw_realization(r, alpha)
            eff = channel.effective_channels(h, w, mask, theta)

            if run_conv and with_bounds:
                h_eff = channel.effective_channels(h, w, mask, theta=None)
                sinr = coherent.sinr_upper(
                    h_eff.g_ef,
                    h_eff.g_tilde,
                    alpha,
                    cfg.sigma2,
                    nu=coherent.phase_coherence_factor(alpha, cfg.sinc_convention),
                )
                sinr_upper_acc += sinr
                log_upper_acc += np.log2(1.0 + sinr)

            if run_conv and with_ber:
                tx_idx = streams["conv_symbols"].integers(
                    0, cfg.M_o, size=(num_ues, cfg.tau_d)
                )
                symbols = self.constellation.points[tx_idx]
                y = coherent.transmit_symbols(
                    eff, symbols, cfg.sigma2, streams["conv_noise"]
                )
                rx_idx = detect_psk(y, self.constellation)
                conv_err += self.bit_table[tx_idx, rx_idx].sum(axis=1)
                conv_bits += cfg.tau_d * self.constellation.bits_per_symbol

            if run_dstbc:
                weights = row_weight_matrix(eff.g_tilde, self.cluster, cfg.L_k)
                pow_weights = np.abs(weights) ** 2
                snr_cf_acc += np.array(
                    [
                        dstbc_analysis.snr_dstbc(pow_weights[k, k], cfg.L_k, cfg.sigma2)
                        for k in range(num_ues)
                    ]
                )
                sinr_cf_acc += dstbc_analysis.sinr_dstbc_closed_all(
                    pow_weights, cfg.L_k, cfg.sigma2
                )
                if with_ber:
                    err, bits = _simulate_dstbc_realization(
                        weights, designs, self.constellation, cfg, blocks,
                        streams["dstbc_noise"], streams["dstbc_symbols"], self.bit_table,
                    )
                    dstbc_err += err
                    dstbc_bits += bits

        agg = {}
        if run_conv:
            if with_bounds:
                agg[("conventional", "sinr_upper")] = sinr_upper_acc / n_realizations
                agg[("conventional", "se_upper")] = (
                    cfg.tau_d / cfg.tau_c
                ) * log_upper_acc / n_realizations
            if with_ber:
                ber = conv_err / np.maximum(conv_bits, 1)
                agg[("conventional", "ber")] = ber
                agg[("conventional", "se_ber")] = dstbc_analysis.se_from_ber(
                    ber, "conventional", cfg.tau_c, cfg.tau_d, cfg.M_o
                )
        if run_dstbc:
            agg[("dstbc", "snr_cf")] = snr_cf_acc / n_realizations
            agg[("dstbc", "sinr_cf")] = sinr_cf_acc / n_realizations
            if with_ber:
                ber = dstbc_err / np.maximum(dstbc_bits, 1)
                agg[("dstbc", "ber")] = ber
                agg[("dstbc", "se_ber")] = dstbc_analysis.se_from_ber(
                    ber, "dstbc", cfg.tau_c, cfg.tau_d, cfg.M_o, cluster_size=cfg.L_k
                )
        return agg


def _simulate_dstbc_realization(
    weights, designs, constellation, cfg, blocks, noise_rng, symbol_rng, bit_table
):
    """One coherence interval of differential transmission for all UEs."""
    num_ues = cfg.K
    cluster_size = cfg.L_k
    ns = designs.n_symbols
    order = constellation.order
    bank = dstbc.EncoderBank(num_ues, cluster_size)
    y_prev = dstbc.transmit_block(weights, bank.states, cfg.sigma2, noise_rng)

    errors = np.zeros(num_ues, dtype=np.int64)
    n_data_blocks = blocks - 1
    for _ in range(n_data_blocks):
        tx_idx = symbol_rng.integers(0, order, size=(num_ues, ns))
        x = dstbc.build_code_matrix(constellation.points[tx_idx], cluster_size, designs)
        states = bank.advance(x)
        y_now = dstbc.transmit_block(weights, states, cfg.sigma2, noise_rng)
        u, v = dstbc.decision_statistics(y_now, y_prev, designs)
        scores = (
            u[..., None] * constellation.points.real
            + v[..., None] * constellation.points.imag
        )
        rx_idx = np.argmax(scores, axis=-1)
        errors += bit_table[tx_idx, rx_idx].sum(axis=1)
        y_prev = y_now

    bits = np.full(
        num_ues, n_data_blocks * ns * constellation.bits_per_symbol, dtype=np.int64
    )
    return errors, bits


def row_weight_matrix(g_tilde, cluster, cluster_size) -> np.ndarray:
    """Effective per-row couplings W[k, i, m] for the block transmission.

    W[k, i, row_of[i, l]] = g_tilde[i, k, l] for the APs l serving UE i;
    rows beyond a degraded UE's cluster stay zero.
    """
    num_ues = g_tilde.shape[0]
    weights = np.zeros((num_ues, num_ues, cluster_size), dtype=complex)
    for i in range(num_ues):
        aps = cluster.serving[i]
        if aps.size == 0:
            continue
        rows = cluster.row_of[i, aps]
        weights[:, i, rows] = g_tilde[i][:, aps]
    return weights


# ---- row assembly and CSV --------------------------------------------------


def format_value(x) -> str:
    """Fixed-point decimal with 9 significant digits, never exponent form."""
    x = float(x)
    if x == 0.0:
        return "0"
    if not math.isfinite(x):
        raise ValueError("metric values must be finite")
    d = Decimal(repr(x))
    quantum = Decimal(1).scaleb(d.adjusted() - 8)
    return format(d.quantize(quantum, rounding=ROUND_HALF_EVEN), "f")


def _metric_rows(cfg, run_id, setup_index, scheme, alpha, metric, values):
    setup_seed = _derived_seed(cfg.seed, _GEOMETRY, setup_index)
    realization_seed = _derived_seed(cfg.seed, _REALIZATION, setup_index)
    return [
        (
            run_id,
            setup_seed,
            realization_seed,
            scheme,
            cfg.precoder,
            float(alpha),
            cfg.L,
            cfg.K,
            cfg.N,
            cfg.L_k,
            ue,
            metric,
            float(value),
        )
        for ue, value in enumerate(values)
    ]


def simulate_setup(cfg: SystemConfig, setup_index: int, run_id: str):
    """All CSV rows of one setup."""
    ctx = SetupContext.build(cfg, setup_index)
    rows = []
    if cfg.with_bounds and "conventional" in cfg.schemes:
        for (scheme, alpha, metric), values in ctx.bound_metrics([cfg.alpha]).items():
            rows.extend(_metric_rows(cfg, run_id, setup_index, scheme, alpha, metric, values))
    need_loop = cfg.with_ber or (cfg.with_bounds and "conventional" in cfg.schemes)
    if need_loop:
        agg = ctx.transmission_metrics(
            cfg.schemes,
            cfg.alpha,
            cfg.realizations,
            with_bounds=cfg.with_bounds,
            with_ber=cfg.with_ber,
        )
        for (scheme, metric), values in agg.items():
            rows.extend(
                _metric_rows(cfg, run_id, setup_index, scheme, cfg.alpha, metric, values)
            )
    return rows


def _worker(args):
    cfg, setup_index, run_id = args
    return setup_index, simulate_setup(cfg, setup_index, run_id)


@dataclass
class RunResult:
    csv_path: Path
    manifest_path: Path
    n_rows: int


def run_experiment(
    cfg: SystemConfig,
    out_dir,
    run_id: str = None,
    workers: int = 1,
    force: bool = False,
    csv_name: str = "metrics.csv",
) -> RunResult:
    """Run all setups, merge rows deterministically, write CSV + manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if run_id is None:
        run_id = f"run-seed{cfg.seed}"
    csv_path = out_dir / csv_name
    manifest_path = out_dir / (Path(csv_name).stem + "_manifest.json")
    if csv_path.exists() and not force:
        raise FileExistsError(f"{csv_path} exists; pass force=True / --force to overwrite")

    start = time.monotonic()
    tasks = [(cfg, s, run_id) for s in range(cfg.setups)]
    rows_by_setup = {}
    if workers <= 1:
        for args in tasks:
            idx, rows = _worker(args)
            rows_by_setup[idx] = rows
            print(f"setup {idx + 1}/{cfg.setups} done", file=sys.stderr)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for idx, rows in pool.map(_worker, tasks):
                rows_by_setup[idx] = rows
                print(f"setup {idx + 1}/{cfg.setups} done", file=sys.stderr)

    all_rows = []
    for idx in sorted(rows_by_setup):
        all_rows.extend(rows_by_setup[idx])
    all_rows.sort(key=_canonical_key)
    write_csv(csv_path, all_rows)

    manifest = {
        "run_id": run_id,
        "master_seed": cfg.seed,
        "config": {f: getattr(cfg, f) for f in cfg.__dataclass_fields__},
        "rows": len(all_rows),
        "files": [csv_path.name],
        "wall_time_s": time.monotonic() - start,
    }
    manifest["config"]["schemes"] = list(cfg.schemes)
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return RunResult(csv_path=csv_path, manifest_path=manifest_path, n_rows=len(all_rows))


def _canonical_key(row):
    # Sort by grouping keys first, then seeds, UE, and metric name.
    return (
        row[0],
        row[3],
        row[4],
        row[5],
        row[6],
        row[7],
        row[8],
        row[9],
        row[1],
        row[2],
        row[10],
        row[11],
    )


def write_csv(path, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in rows:
            (
                run_id,
                setup_seed,
                realization_seed,
                scheme,
                precoder,
                alpha,
                num_aps,
                num_ues,
                n_ant,
                cluster_size,
                ue,
                metric,
                value,
            ) = row
            fh.write(
                ",".join(
                    (
                        run_id,
                        str(setup_seed),
                        str(realization_seed),
                        scheme,
                        precoder,
                        format_value(alpha),
                        str(num_aps),
                        str(num_ues),
                        str(n_ant),
                        str(cluster_size),
                        str(ue),
                        metric,
                        format_value(value),
                    )
                )
                + "\n"
            )
