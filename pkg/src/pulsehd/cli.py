"""``pulsehd`` command line: design, simulate, analyze, sweep.

CSV columns per command
-----------------------
analyze psd        freq_hz, power_dbm
analyze snc        freq_hz, snc_db
analyze cmrr       freq_hz, cm_dbm, diff_dbm
analyze squeezing  mode_index, squeezing_db, antisqueezing_db, uncertainty_db, n_slots
sweep power        power_w, noise_dbm, noise_mw, saturated   (+ "# key=value" fit lines)
sweep cf           feedback_capacitance_f, f_tia_hz, f_3db_hz, peaking_db, damping
sweep rf           feedback_resistance_ohm, feedback_capacitance_f, f_3db_hz, peaking_db, snc_db

Every command with ``--out FILE.csv`` also writes ``FILE.json`` holding a
summary and the config hash. Outputs are written atomically.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import re
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis as an
from .circuit import (
    bode_analysis,
    design_feedback_capacitance,
    log_grid,
    tia_cutoff,
    tia_damping,
)
from .config import ExperimentConfig
from .errors import ChannelError, ConfigError, OutputError, PulseHDError
from .quantum import electronic_efficiency_from_snc
from .synth import (
    CHANNELS,
    RUN_BALANCED,
    RUN_MODE_BASE,
    ImperfectionConfig,
    TraceBuffer,
    _resolve_noise,
    predicted_snc_db,
    synthesize,
    synthesize_common_mode,
    synthesize_dark,
    synthesize_shot,
)
from .traceio import atomic_open, read_trace, write_trace

BODE_TABLE_HZ = (1e6, 10e6, 50e6, 100e6, 150e6, 200e6, 300e6, 500e6, 1e9)
_MODE_CHANNEL = re.compile(r"^mode(\d+)$")
EXTRA_CHANNELS = ("cm", "bal", "shot", "dark")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.10g}"


def render_csv(header, rows, trailer=None):
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    for key, value in (trailer or {}).items():
        buf.write(f"# {key}={_fmt(value)}\n")
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _write_text(path, text):
    try:
        with atomic_open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def emit(out, csv_text, summary):
    """Write CSV + JSON sidecar (or print CSV when ``out`` is None)."""
    summary_text = json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n"
    if out is None:
        sys.stdout.write(csv_text)
        return
    out = Path(out)
    _write_text(out.with_suffix(".json"), summary_text)
    _write_text(out, csv_text)
    sys.stdout.write(summary_text)


# -- design ------------------------------------------------------------------------


def design_report(cfg: ExperimentConfig) -> dict:
    catalog = cfg.catalog()
    det = cfg.detector_config(catalog)
    tia = det.tia
    grid = log_grid()
    bode = bode_analysis(tia, grid)
    recommended = design_feedback_capacitance(tia.opamp, tia.photodiode, tia.feedback_resistance)
    table = [
        {"freq_hz": f, "magnitude_db": float(np.interp(np.log(f), np.log(grid), bode.magnitude_db))}
        for f in BODE_TABLE_HZ
    ]
    comparison = []
    for name in sorted(catalog.opamps):
        oa = catalog.opamp(name)
        alt = replace(tia, opamp=oa).with_designed_feedback()
        b = bode_analysis(alt, grid)
        c_in = 2 * tia.photodiode.capacitance + oa.input_capacitance
        noise_gain = 1.0 + c_in / alt.feedback_capacitance
        comparison.append({
            "opamp": name,
            "gbp_hz": oa.gbp,
            "input_capacitance_f": oa.input_capacitance,
            "min_noise_gain": oa.min_noise_gain,
            "recommended_feedback_capacitance_f": alt.feedback_capacitance,
            "f_tia_hz": tia_cutoff(alt),
            "f_3db_hz": b.f_3db,
            "peaking_db": b.peaking_db,
            "high_freq_noise_gain": noise_gain,
            "stable": noise_gain >= oa.min_noise_gain,
        })
    return {
        "opamp": tia.opamp.name,
        "photodiode": tia.photodiode.name,
        "feedback_resistance_ohm": tia.feedback_resistance,
        "feedback_capacitance_f": tia.feedback_capacitance,
        "recommended_feedback_capacitance_f": recommended,
        "f_tia_hz": tia_cutoff(tia),
        "f_3db_hz": bode.f_3db,
        "peaking_db": bode.peaking_db,
        "damping": tia_damping(tia),
        "peaking_warning": bode.peaking_db > 0.5,
        "bode": table,
        "comparison": comparison,
        "config_hash": cfg.hash,
    }


def format_design(rep: dict) -> str:
    pf = 1e12
    lines = [
        f"TIA: {rep['opamp']} + {rep['photodiode']}, R_F = {rep['feedback_resistance_ohm']:.6g} ohm, "
        f"C_F = {rep['feedback_capacitance_f'] * pf:.3f} pF",
        f"  cutoff estimate f_TIA   {rep['f_tia_hz'] / 1e6:9.2f} MHz",
        f"  recommended C_F         {rep['recommended_feedback_capacitance_f'] * pf:9.3f} pF",
        "  -3 dB bandwidth         "
        + (f"{rep['f_3db_hz'] / 1e6:9.2f} MHz" if rep["f_3db_hz"] else "  beyond grid"),
        f"  peaking                 {rep['peaking_db']:9.2f} dB",
    ]
    if rep["peaking_warning"]:
        lines.append("  WARNING: response peaks above 0.5 dB; raise C_F towards the recommended value")
    lines.append("  Bode (|Z|/R_F):")
    lines += [f"    {row['freq_hz'] / 1e6:8.1f} MHz  {row['magnitude_db']:8.2f} dB" for row in rep["bode"]]
    lines.append("  Op-amp comparison at recommended C_F:")
    lines.append("    name      GBP[GHz]  C_A1[pF]  C_F[pF]  f_TIA[MHz]  f_3dB[MHz]  stable")
    for c in rep["comparison"]:
        f3 = f"{c['f_3db_hz'] / 1e6:10.1f}" if c["f_3db_hz"] else "         -"
        lines.append(
            f"    {c['opamp']:<8} {c['gbp_hz'] / 1e9:9.2f} {c['input_capacitance_f'] * pf:9.2f} "
            f"{c['recommended_feedback_capacitance_f'] * pf:8.3f} {c['f_tia_hz'] / 1e6:11.1f} {f3}  "
            f"{'yes' if c['stable'] else 'no'}"
        )
    return "\n".join(lines) + "\n"


def cmd_design(args):
    cfg = ExperimentConfig.load(args.config)
    rep = design_report(cfg)
    sys.stdout.write(format_design(rep))
    if args.out:
        _write_text(args.out, json.dumps(_jsonable(rep), indent=2, sort_keys=True) + "\n")
    return 0


# -- simulate ------------------------------------------------------------------------


def _parse_channels(text):
    if text is None:
        return None
    return [c.strip() for c in text.split(",") if c.strip()]


def _check_channel_names(names):
    if not names:
        raise ConfigError("source.channels: at least one channel is required")
    for n in names:
        if n not in CHANNELS and n not in EXTRA_CHANNELS and not _MODE_CHANNEL.match(n):
            raise ChannelError(
                f"unknown channel {n!r}; choose from {list(CHANNELS) + list(EXTRA_CHANNELS)} or mode<N>"
            )
    if len(set(names)) != len(names):
        raise ConfigError("duplicate channel names")


def simulate_trace(cfg: ExperimentConfig, channels=None, seed=None, workers=1) -> TraceBuffer:
    """Synthesize every requested channel for one configuration.

    Besides the detector channels, ``cm`` (one diode lit), ``bal`` (both
    diodes, signal blocked), ``shot`` (signal blocked), ``dark`` (LO blocked)
    and ``mode<N>`` (mode N selected) are available; each extra channel is the
    AC output of its own run. ``cm`` and ``bal`` use the common-mode test
    power so the single-diode run stays inside the rails.
    """
    channels = list(channels or cfg.channels)
    _check_channel_names(channels)
    src = cfg.source_config()
    det = cfg.detector_config()
    imp0 = cfg.imperfection_config(seed)
    for name in channels:
        m = _MODE_CHANNEL.match(name)
        if m:
            src.spectrum.mode(int(m.group(1)))
    noise = _resolve_noise(src, det, imp0)
    imp = ImperfectionConfig(imp0.pd_gain_mismatch, noise, None, imp0.snc_reference_hz, imp0.rng_seed)
    duration = cfg.duration
    kw = {"workers": workers}

    out = {}
    clipped = 0
    main = [c for c in channels if c in CHANNELS]
    if main:
        tr = synthesize(src, det, imp, duration, main, **kw)
        out.update(tr.channels)
        clipped += tr.meta["n_clipped"]
    for name in channels:
        if name in out:
            continue
        if name == "cm":
            which = cfg["imperfections"]["common_mode_diode"]
            tr = synthesize_common_mode(cfg.common_mode_source, det, imp, duration, which, **kw)
        elif name == "bal":
            tr = synthesize_shot(cfg.common_mode_source, det, imp, duration, run=RUN_BALANCED, **kw)
        elif name == "shot":
            tr = synthesize_shot(src, det, imp, duration, **kw)
        elif name == "dark":
            tr = synthesize_dark(src, det, imp, duration, **kw)
        else:
            n = int(_MODE_CHANNEL.match(name).group(1))
            tr = synthesize(replace(src, selected_mode=n), det, imp, duration, run=RUN_MODE_BASE + n, **kw)
        out[name] = tr.channel("diff_ac")
        clipped += tr.meta["n_clipped"]
    meta = {"rng_seed": imp.rng_seed, "electronic_noise_rms": noise, "n_clipped": clipped, "saturated": clipped > 0}
    return TraceBuffer(src.sample_rate, {c: out[c] for c in channels}, 0.0, meta)


def cmd_simulate(args):
    cfg = ExperimentConfig.load(args.config)
    if not args.out:
        raise ConfigError("simulate needs --out PATH")
    trace = simulate_trace(cfg, _parse_channels(args.channels), args.seed, args.workers)
    try:
        sha = write_trace(args.out, trace)
    except OSError as exc:
        raise OutputError(f"cannot write {args.out}: {exc}") from exc
    summary = {
        "out": str(args.out),
        "seed": trace.meta["rng_seed"],
        "payload_sha256": sha,
        "channels": trace.names,
        "n_samples": trace.n_samples,
        "sample_rate_hz": trace.sample_rate,
        "electronic_noise_rms_v": trace.meta["electronic_noise_rms"],
        "n_clipped": trace.meta["n_clipped"],
        "config_hash": cfg.hash,
    }
    sys.stdout.write(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    return 0


# -- analyze -------------------------------------------------------------------------


def _pick(trace: TraceBuffer, preferred, what):
    for name in preferred:
        if name in trace.channels:
            return name
    raise ChannelError(f"{what}: none of the channels {list(preferred)} found (have {trace.names})")


def _psd(cfg, samples, fs):
    a = cfg["analysis"]
    return an.welch_psd(samples, fs, int(a["segment_len_samples"]), float(a["overlap_fraction"]), a["window"])


def _check_rate(trace, cfg):
    fs = cfg["source"]["sample_rate_hz"]
    if abs(trace.sample_rate - fs) > 1e-9 * fs:
        raise ConfigError(
            f"source.sample_rate_hz: config says {fs:g} Hz but the trace was sampled at {trace.sample_rate:g} Hz"
        )


def analyze_psd(trace, cfg, channel=None, **_):
    name = channel or _pick(trace, ["diff_ac"], "psd")
    est = _psd(cfg, trace.channel(name), trace.sample_rate)
    a = cfg["analysis"]
    rows = list(zip(est.freqs, est.power_dbm))
    summary = {
        "channel": name,
        "rbw_hz": est.rbw,
        "segment_count": est.segment_count,
        "band_center_hz": a["analysis_freq_hz"],
        "band_span_hz": a["analysis_span_hz"],
        "band_power_dbm": an.mw_to_dbm(est.band_power_mw(a["analysis_freq_hz"], a["analysis_span_hz"])),
        "median_level_dbm": float(np.median(est.power_dbm[1:])),
    }
    return ["freq_hz", "power_dbm"], rows, summary


def analyze_snc(trace, cfg, channel=None, dark=None, **_):
    light_name = channel or _pick(trace, ["shot", "diff_ac"], "snc light")
    if dark is not None:
        dark_samples = dark.channel(_pick(dark, ["dark", "diff_ac"], "snc dark"))
    else:
        dark_samples = trace.channel(_pick(trace, ["dark"], "snc dark (or pass --dark)"))
    light = _psd(cfg, trace.channel(light_name), trace.sample_rate)
    dk = _psd(cfg, dark_samples, trace.sample_rate)
    snc = an.snc_spectrum(light, dk)
    imp, a = cfg["imperfections"], cfg["analysis"]
    ref_hz, span = imp["snc_reference_hz"], a["snc_span_hz"]
    snc_ref = an.snc_at(light, dk, ref_hz, span)
    snc_an = an.snc_at(light, dk, a["analysis_freq_hz"], a["analysis_span_hz"])
    f_lo, f_hi = ref_hz - span / 2, ref_hz + span / 2
    summary = {
        "light_channel": light_name,
        "snc_reference_hz": ref_hz,
        "snc_db": snc_ref,
        "snc_analysis_freq_db": snc_an,
        "eta_elec_from_snc": electronic_efficiency_from_snc(snc_ref) if snc_ref > 0 else 0.0,
        "eta_elec_from_variance": an.electronic_efficiency_from_psd(dk, light, f_lo, f_hi),
        "rbw_hz": light.rbw,
    }
    return ["freq_hz", "snc_db"], list(zip(light.freqs, snc)), summary


def analyze_cmrr(trace, cfg, channel=None, **_):
    cm_name = _pick(trace, ["cm"], "cmrr needs a common-mode channel")
    diff_name = channel or _pick(trace, ["bal", "diff_ac"], "cmrr difference")
    cm = _psd(cfg, trace.channel(cm_name), trace.sample_rate)
    diff = _psd(cfg, trace.channel(diff_name), trace.sample_rate)
    f_rep = cfg["source"]["rep_rate_hz"]
    value = an.cmrr(cm, diff, f_rep)
    summary = {"cmrr_db": value, "rep_rate_hz": f_rep, "diff_channel": diff_name, "rbw_hz": cm.rbw}
    return ["freq_hz", "cm_dbm", "diff_dbm"], list(zip(cm.freqs, cm.power_dbm, diff.power_dbm)), summary


def _series(cfg, samples, fs, with_phases=True):
    a, s = cfg["analysis"], cfg["source"]
    ser = an.slot_integrate(samples, fs, s["rep_rate_hz"], a["slot_window_fraction"], a["slot_offset_s"])
    if with_phases:
        ser = ser.with_phases(cfg.source_config().slot_phases(len(ser)))
    return ser


def analyze_squeezing(trace, cfg, channel=None, shot=None, **_):
    fs = trace.sample_rate
    if shot is not None:
        ref_samples = shot.channel(_pick(shot, ["shot", "diff_ac"], "squeezing shot reference"))
    else:
        ref_samples = trace.channel(_pick(trace, ["shot"], "squeezing shot reference (or pass --shot)"))
    ref = _series(cfg, ref_samples, fs, with_phases=False)
    if channel:
        m = _MODE_CHANNEL.match(channel)
        targets = [(int(m.group(1)) if m else cfg["source"]["selected_mode"], channel)]
    else:
        modes = sorted((int(m.group(1)), n) for n in trace.names if (m := _MODE_CHANNEL.match(n)))
        targets = modes or [(cfg["source"]["selected_mode"], _pick(trace, ["diff_ac"], "squeezing"))]
    n_bins = int(cfg["analysis"]["phase_bins"])
    rows, results = [], []
    for idx, name in targets:
        r = an.squeezing_from_series(_series(cfg, trace.channel(name), fs), ref, idx, n_bins)
        rows.append((r.mode_index, r.squeezing_db, r.antisqueezing_db, r.statistical_uncertainty_db, r.n_slots))
        results.append({"channel": name, "mode_index": r.mode_index, "squeezing_db": r.squeezing_db,
                        "antisqueezing_db": r.antisqueezing_db, "method": r.method})
    summary = {"modes": results, "n_bins": n_bins}
    return ["mode_index", "squeezing_db", "antisqueezing_db", "uncertainty_db", "n_slots"], rows, summary


ANALYZERS = {"psd": analyze_psd, "snc": analyze_snc, "cmrr": analyze_cmrr, "squeezing": analyze_squeezing}


def run_analysis(trace, cfg, mode, channel=None, dark=None, shot=None):
    _check_rate(trace, cfg)
    for other in (dark, shot):
        if other is not None and abs(other.sample_rate - trace.sample_rate) > 1e-9 * trace.sample_rate:
            raise ConfigError("reference trace has a different sample rate")
    header, rows, summary = ANALYZERS[mode](trace, cfg, channel=channel, dark=dark, shot=shot)
    summary = {"mode": mode, **summary, "config_hash": cfg.hash}
    return render_csv(header, rows), summary


def cmd_analyze(args):
    cfg = ExperimentConfig.load(args.config)
    trace = read_trace(args.trace)
    dark = read_trace(args.dark) if args.dark else None
    shot = read_trace(args.shot) if args.shot else None
    csv_text, summary = run_analysis(trace, cfg, args.mode, args.channel, dark, shot)
    summary["trace"] = str(args.trace)
    emit(args.out, csv_text, summary)
    return 0


# -- sweep ---------------------------------------------------------------------------


def _parse_grid(text):
    try:
        grid = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"--grid: {exc}") from exc
    if len(grid) < 3:
        raise ConfigError("--grid needs at least 3 values")
    return grid


def sweep(cfg: ExperimentConfig, axis, grid, seed=None, workers=1):
    """Return (csv_text, summary) for one sweep axis."""
    det = cfg.detector_config()
    tia = det.tia
    grid = list(grid)
    if len(grid) < 3:
        raise ConfigError("sweep grid needs at least 3 values")
    f = log_grid()
    if axis == "power":
        a = cfg["analysis"]
        res = an.linearity_sweep(
            cfg.source_config(), det, cfg.imperfection_config(seed), grid,
            a["analysis_freq_hz"], a["analysis_span_hz"], cfg.duration, int(a["segment_len_samples"]),
            workers=workers,
        )
        rows = list(zip(res.powers, res.noise_dbm, res.noise_mw, res.saturated))
        fit = {
            "slope_mw_per_w": res.slope_mw_per_w,
            "intercept_mw": res.intercept_mw,
            "r_squared": res.r_squared,
            "db_per_doubling": res.db_per_doubling,
            "knee_w": res.knee,
            "all_saturated": res.all_saturated,
        }
        return render_csv(["power_w", "noise_dbm", "noise_mw", "saturated"], rows, fit), fit
    if axis == "cf":
        rows = []
        for cf in grid:
            t = _tia_with(tia, feedback_capacitance=cf)
            b = bode_analysis(t, f)
            rows.append((cf, tia_cutoff(t), b.f_3db, b.peaking_db, tia_damping(t)))
        header = ["feedback_capacitance_f", "f_tia_hz", "f_3db_hz", "peaking_db", "damping"]
        designed = design_feedback_capacitance(tia.opamp, tia.photodiode, tia.feedback_resistance)
        return render_csv(header, rows), {"recommended_feedback_capacitance_f": designed}
    if axis == "rf":
        src = cfg.source_config()
        noise = _resolve_noise(src, det, cfg.imperfection_config(seed))
        eps = cfg["imperfections"]["pd_gain_mismatch"]
        ref_hz = cfg["imperfections"]["snc_reference_hz"]
        designed = cfg["detector"]["feedback_capacitance_mode"] == "designed"
        rows = []
        for rf in grid:
            t = _tia_with(tia, feedback_resistance=rf)
            if designed:
                t = t.with_designed_feedback()
            b = bode_analysis(t, f)
            d = replace(det, tia=t)
            rows.append((rf, t.feedback_capacitance, b.f_3db, b.peaking_db, predicted_snc_db(src, d, noise, ref_hz, eps)))
        header = ["feedback_resistance_ohm", "feedback_capacitance_f", "f_3db_hz", "peaking_db", "snc_db"]
        return render_csv(header, rows), {"electronic_noise_rms_v": noise, "snc_reference_hz": ref_hz}
    raise ConfigError(f"unknown sweep axis {axis!r}; choose power, cf or rf")


def _tia_with(tia, **changes):
    try:
        return replace(tia, **changes)
    except PulseHDError as exc:
        raise ConfigError(f"sweep value rejected: {exc}") from exc


def cmd_sweep(args):
    cfg = ExperimentConfig.load(args.config)
    csv_text, summary = sweep(cfg, args.axis, _parse_grid(args.grid), args.seed, args.workers)
    emit(args.out, csv_text, {"axis": args.axis, **summary, "config_hash": cfg.hash})
    return 0


# -- entry point ---------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="pulsehd", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--config", type=Path, help="experiment config (JSON); defaults when omitted")
        sp.add_argument("--out", type=Path, help=out_help)

    d = sub.add_parser("design", help="TIA design report")
    common(d, "write the JSON report here")
    d.set_defaults(func=cmd_design)

    s = sub.add_parser("simulate", help="synthesize a trace file")
    common(s, "trace file to write")
    s.add_argument("--seed", type=int, help="override imperfections.rng_seed")
    s.add_argument("--channels", help="comma-separated channel list (overrides source.channels)")
    s.add_argument("--workers", type=int, default=1, help="threads for random draws")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="analyze a trace file")
    a.add_argument("trace", type=Path)
    common(a, "CSV output (JSON summary goes next to it); stdout when omitted")
    a.add_argument("--mode", required=True, choices=sorted(ANALYZERS))
    a.add_argument("--channel", help="channel to analyze instead of the default")
    a.add_argument("--dark", type=Path, help="trace holding the dark reference (snc)")
    a.add_argument("--shot", type=Path, help="trace holding the shot-noise reference (squeezing)")
    a.set_defaults(func=cmd_analyze)

    w = sub.add_parser("sweep", help="sweep LO power, C_F or R_F")
    common(w, "CSV output (JSON summary goes next to it); stdout when omitted")
    w.add_argument("--axis", required=True, choices=["power", "cf", "rf"])
    w.add_argument("--grid", required=True, help="comma-separated values in W, F or ohm")
    w.add_argument("--seed", type=int, help="override imperfections.rng_seed")
    w.add_argument("--workers", type=int, default=1)
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PulseHDError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return OutputError.exit_code


if __name__ == "__main__":
    sys.exit(main())
