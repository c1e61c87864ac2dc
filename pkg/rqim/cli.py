"""Command-line interface: mark, extract, restore, verify and the experiment commands"""
import logging
from pathlib import Path
from typing import List, Optional, Sequence

import click
import numpy as np

from .config import (
    DEFAULT_ALPHA,
    DEFAULT_DELTA,
    DEFAULT_DIGITS,
    DEFAULT_FRACTIONS,
    DEFAULT_K,
    DEFAULT_M_CARD,
    DEFAULT_SAMPLES,
    DEFAULT_THRESHOLD,
    RQIM_WORKERS,
    USABILITY_PAIR_INDEX,
    configure_logging,
)
from .errors import EXIT_DETECTED, EXIT_FORMAT, EXIT_OK, EXIT_USAGE, FormatError, RqimError
from .hs_baseline import (
    HsParams,
    hs_capacity,
    hs_embed,
    hs_extract_tensor,
    hs_mark_tensor,
    hs_restore_tensor,
    prepare_host,
)
from .keying import (
    HsKey,
    WatermarkInfo,
    construct_locations,
    read_alpha,
    read_hs_key,
    read_info,
    read_key,
    write_hs_key,
    write_info,
    write_key_files,
)
from .model_io import (
    bits_to_text,
    decode_message,
    encode_message,
    load_hs_side_info,
    load_tensor,
    save_csv,
    save_hs_side_info,
    save_tensor,
    write_csv,
)
from .rqim_core import QimParams, rqim_embed
from .schemes import (
    Precision,
    WatermarkMessage,
    WeightTensor,
    extract,
    infringement_check,
    mark,
    restore,
    verify_integrity_noiseless,
    verify_integrity_noisy,
)
from .stats import (
    capacity_fraction,
    empirical_swr,
    fitted_normal_ppf,
    measure_distortion,
    preprocessed_view,
    qq_points,
    summarize_distribution,
    swr_sweep,
    uniform_ppf,
    usability_trials,
)

logger = logging.getLogger(__name__)

_PATH = click.Path(dir_okay=False, path_type=Path)


def _float_list(ctx, param, value) -> Optional[List[float]]:
    if value is None or isinstance(value, list):
        return value
    try:
        return [float(v) for v in str(value).split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {value!r}")


def model_options(fn):
    """--model plus the raw-dump import flags"""
    fn = click.option("--count", type=int, default=None, help="Element count of a raw dump")(fn)
    fn = click.option(
        "--dtype",
        type=click.Choice(["binary32", "binary64"]),
        default="binary64",
        help="Raw dump element type",
    )(fn)
    fn = click.option("--raw", is_flag=True, help="Model is a headerless little-endian dump")(fn)
    fn = click.option("--model", type=_PATH, required=True, help="Weight tensor file")(fn)
    return fn


def _load_model(model: Path, raw: bool, dtype: str, count: Optional[int]) -> WeightTensor:
    precision = Precision.BINARY32 if dtype == "binary32" else Precision.BINARY64
    return load_tensor(model, raw=raw, precision=precision, count=count)


def _message_text(message: Optional[str], message_file: Optional[Path]) -> str:
    if (message is None) == (message_file is None):
        raise click.UsageError("give exactly one of --message or --message-file")
    return message if message is not None else message_file.read_text(encoding="utf-8")


def _emit_csv(data: bytes, out_csv: Optional[Path]) -> None:
    if out_csv is None:
        click.echo(data.decode("utf-8"), nl=False)
    else:
        out_csv.write_bytes(data)


def _hs_params(key: HsKey, side_path: Path):
    side = load_hs_side_info(side_path)
    if (side.digits_count, side.pair_index, side.shift_v) != (key.q, key.pair_index, key.shift_v):
        raise FormatError("HS key and side info describe different preprocessing")
    return side, HsParams(peak=key.peak, valley=key.valley)


@click.group()
@click.option("--log-level", default=None, help="Overrides LOG_LEVEL")
def cli(log_level: Optional[str]):
    """Reversible QIM watermarking of model weights"""
    configure_logging(log_level)


@cli.command("mark")
@model_options
@click.option("--message", default=None, help="Watermark text")
@click.option("--message-file", type=_PATH, default=None, help="File holding the watermark text")
@click.option("--delta", type=float, default=DEFAULT_DELTA, show_default=True)
@click.option("--alpha", type=float, default=DEFAULT_ALPHA, show_default=True)
@click.option("--m-card", type=int, default=DEFAULT_M_CARD, show_default=True)
@click.option("--k", type=float, default=DEFAULT_K, show_default=True)
@click.option("--clue", type=int, default=None, help="Seed of the location sequence (R-QIM only)")
@click.option("--out", type=_PATH, required=True)
@click.option("--key-out", type=_PATH, required=True)
@click.option("--info-out", type=_PATH, required=True)
@click.option("--alpha-out", type=_PATH, default=None)
@click.option("--method", type=click.Choice(["rqim", "hs"]), default="rqim", show_default=True)
@click.option("--side-out", type=_PATH, default=None, help="HS side info archive")
@click.option("--digits", type=int, default=DEFAULT_DIGITS, show_default=True, help="HS significant digits q")
@click.option("--pair-index", type=int, default=None, help="HS digit pair position (auto when omitted)")
@click.option("--workers", type=int, default=RQIM_WORKERS, show_default=True)
def cmd_mark(
    model, raw, dtype, count, message, message_file, delta, alpha, m_card, k, clue, out,
    key_out, info_out, alpha_out, method, side_out, digits, pair_index, workers,
):
    """Embed a text watermark into a weight tensor"""
    weights = _load_model(model, raw, dtype, count)
    text = _message_text(message, message_file)

    if method == "hs":
        if side_out is None:
            raise click.UsageError("--method hs needs --side-out")
        bits = encode_message(text, 2).bits
        marked, side, params = hs_mark_tensor(weights.elements, bits, digits, pair_index)
        watermarked = weights.with_elements(marked)
        info = WatermarkInfo(length=len(bits), m_card=2)
        hs_key = HsKey(side.digits_count, side.pair_index, side.shift_v, params.peak, params.valley)
        write_hs_key(hs_key, key_out)
        write_info(info, info_out)
        save_hs_side_info(side, side_out)
    else:
        if clue is None:
            raise click.UsageError("--method rqim needs --clue")
        if alpha_out is None:
            raise click.UsageError("--method rqim needs --alpha-out")
        params_q = QimParams(delta=delta, m_card=m_card, alpha=alpha, k=k)
        msg = encode_message(text, m_card)
        watermarked, info, sk = mark(weights, msg, params_q, clue, workers)
        write_key_files(sk, info, key_out, info_out, alpha, alpha_out)

    save_tensor(watermarked, out)
    if info.length and not np.array_equal(watermarked.elements, weights.elements):
        swr_text = f"{empirical_swr(weights.elements, watermarked.elements):.4f} dB"
    else:
        swr_text = "inf"
    click.echo(f"L={info.length} |M|={info.m_card} SWR={swr_text}")
    return EXIT_OK


@cli.command("extract")
@model_options
@click.option("--key", type=_PATH, required=True)
@click.option("--info", type=_PATH, required=True)
@click.option("--out", type=_PATH, default=None, help="Decoded text (stdout when omitted)")
@click.option("--bits-out", type=_PATH, default=None, help="Extracted bits as '0'/'1' text")
@click.option("--method", type=click.Choice(["rqim", "hs"]), default="rqim", show_default=True)
@click.option("--side-info", type=_PATH, default=None)
@click.option("--workers", type=int, default=RQIM_WORKERS, show_default=True)
def cmd_extract(model, raw, dtype, count, key, info, out, bits_out, method, side_info, workers):
    """Read the watermark back; needs no alpha file"""
    weights = _load_model(model, raw, dtype, count)
    wm_info = read_info(info)

    if method == "hs":
        if side_info is None:
            raise click.UsageError("--method hs needs --side-info")
        side, params = _hs_params(read_hs_key(key), side_info)
        bits = hs_extract_tensor(weights.elements, side, params, wm_info.length)
        message = WatermarkMessage.from_bits(bits, 2)
    else:
        message = extract(weights, wm_info, read_key(key), workers)

    text = decode_message(message)
    if bits_out is not None:
        bits_out.write_text(bits_to_text(message.bits), encoding="utf-8")
    if out is None:
        click.echo(text)
    else:
        out.write_text(text, encoding="utf-8")
    return EXIT_OK


@cli.command("restore")
@model_options
@click.option("--key", type=_PATH, required=True)
@click.option("--info", type=_PATH, required=True)
@click.option("--alpha-file", type=_PATH, default=None)
@click.option("--out", type=_PATH, required=True)
@click.option("--method", type=click.Choice(["rqim", "hs"]), default="rqim", show_default=True)
@click.option("--side-info", type=_PATH, default=None)
@click.option("--workers", type=int, default=RQIM_WORKERS, show_default=True)
def cmd_restore(model, raw, dtype, count, key, info, alpha_file, out, method, side_info, workers):
    """Recover the original weights"""
    weights = _load_model(model, raw, dtype, count)

    if method == "hs":
        if side_info is None:
            raise click.UsageError("--method hs needs --side-info")
        side, params = _hs_params(read_hs_key(key), side_info)
        restored = weights.with_elements(hs_restore_tensor(weights.elements, side, params))
    else:
        if alpha_file is None:
            raise click.UsageError("restore needs --alpha-file")
        restored = restore(weights, read_info(info), read_key(key), read_alpha(alpha_file), workers)

    save_tensor(restored, out)
    click.echo(f"restored {restored.count} weights")
    return EXIT_OK


@cli.command("verify")
@model_options
@click.option("--original", type=_PATH, required=True)
@click.option("--key", type=_PATH, required=True)
@click.option("--info", type=_PATH, required=True)
@click.option("--alpha-file", type=_PATH, required=True)
@click.option("--noise-bound", type=float, default=None, help="Engages noisy-channel mode")
@click.option("--tolerance", type=float, default=None)
@click.option("--strict-exit", is_flag=True, help="Exit 4 when tampering is found")
@click.option("--workers", type=int, default=RQIM_WORKERS, show_default=True)
def cmd_verify(
    model, raw, dtype, count, original, key, info, alpha_file, noise_bound, tolerance, strict_exit, workers
):
    """Integrity check against the owner's original weights"""
    received = _load_model(model, raw, dtype, count)
    reference = _load_model(original, raw, dtype, count)
    args = (received, read_info(info), read_key(key), read_alpha(alpha_file), reference)
    if noise_bound is None:
        report = verify_integrity_noiseless(*args, tolerance=tolerance, workers=workers)
    else:
        report = verify_integrity_noisy(*args, noise_bound, tolerance=tolerance, workers=workers)
    click.echo(f"b={report.b:.6g} mismatches={report.mismatch_count} tampered={report.tampered}")
    return EXIT_DETECTED if strict_exit and report.tampered else EXIT_OK


@cli.command("infringe")
@model_options
@click.option("--key", type=_PATH, required=True)
@click.option("--info", type=_PATH, required=True)
@click.option("--message", default=None)
@click.option("--message-file", type=_PATH, default=None)
@click.option("--threshold", type=float, default=DEFAULT_THRESHOLD, show_default=True)
@click.option("--strict-exit", is_flag=True, help="Exit 4 when the watermark is detected")
@click.option("--workers", type=int, default=RQIM_WORKERS, show_default=True)
def cmd_infringe(model, raw, dtype, count, key, info, message, message_file, threshold, strict_exit, workers):
    """Compare the watermark in a suspect model with the owner's message"""
    suspect = _load_model(model, raw, dtype, count)
    wm_info = read_info(info)
    expected = encode_message(_message_text(message, message_file), wm_info.m_card)
    report = infringement_check(suspect, wm_info, read_key(key), expected, threshold, workers)
    click.echo(f"BER={report.ber:.4f} detected={report.detected}")
    return EXIT_DETECTED if strict_exit and report.detected else EXIT_OK


def _summary_rows(prefix: str, sample: np.ndarray) -> List[Sequence]:
    s = summarize_distribution(sample, "normal")
    return [
        (f"{prefix}.n", s.n),
        (f"{prefix}.skewness", s.skewness),
        (f"{prefix}.kurtosis", s.kurtosis),
        (f"{prefix}.ks_statistic", s.ks_statistic),
        (f"{prefix}.ks_p", s.ks_p),
        (f"{prefix}.jb_statistic", s.jb_statistic),
        (f"{prefix}.jb_p", s.jb_p),
    ]


def _qq(sample: np.ndarray, reference: str) -> np.ndarray:
    if reference == "normal":
        return qq_points(sample, fitted_normal_ppf(sample))
    return qq_points(sample, uniform_ppf(float(sample.min()), float(sample.max())))


@cli.command("analyze")
@model_options
@click.option(
    "--qq", "reference", type=click.Choice(["normal", "uniform"]), default="uniform", show_default=True
)
@click.option("--out-csv", type=_PATH, default=None, help="metric,value summary")
@click.option("--qq-csv", type=_PATH, default=None, help="Q-Q points of the preprocessed view")
@click.option("--raw-qq-csv", type=_PATH, default=None, help="Q-Q points of the raw weights")
@click.option("--digits", type=int, default=DEFAULT_DIGITS, show_default=True)
@click.option("--pair-index", type=int, default=USABILITY_PAIR_INDEX, show_default=True)
def cmd_analyze(model, raw, dtype, count, reference, out_csv, qq_csv, raw_qq_csv, digits, pair_index):
    """Distribution statistics of raw and HS-preprocessed weights"""
    weights = _load_model(model, raw, dtype, count).as_float64()
    host = preprocessed_view(weights, digits, pair_index).astype(np.float64)

    rows = _summary_rows("raw", weights) + _summary_rows("preprocessed", host)
    _emit_csv(write_csv(rows, header=("metric", "value")), out_csv)
    header = ("theoretical", "empirical")
    if qq_csv is not None:
        save_csv(qq_csv, _qq(host, reference).tolist(), header=header)
    if raw_qq_csv is not None:
        save_csv(raw_qq_csv, _qq(weights, reference).tolist(), header=header)
    return EXIT_OK


@cli.command("compare")
@model_options
@click.option("--fractions", callback=_float_list, default=",".join(str(f) for f in DEFAULT_FRACTIONS))
@click.option("--delta", type=float, default=DEFAULT_DELTA, show_default=True)
@click.option("--alpha", type=float, default=DEFAULT_ALPHA, show_default=True)
@click.option("--digits", type=int, default=DEFAULT_DIGITS, show_default=True)
@click.option("--pair-index", type=int, default=None)
@click.option("--clue", type=int, default=0, show_default=True)
@click.option("--out-csv", type=_PATH, default=None)
def cmd_compare(model, raw, dtype, count, fractions, delta, alpha, digits, pair_index, clue, out_csv):
    """Capacity and host-domain SWR of R-QIM against HS over model prefixes"""
    weights = _load_model(model, raw, dtype, count).as_float64()
    params = QimParams(delta=delta, m_card=2, alpha=alpha)
    rng = np.random.default_rng(clue)
    rows = []
    for fraction in fractions:
        n = capacity_fraction(len(weights), fraction)
        host, hs_params = prepare_host(weights[:n], digits, pair_index)
        values = host.host_values
        c_hs = hs_capacity(values)
        bits = rng.integers(0, 2, size=c_hs)

        hs_marked = hs_embed(values, bits, hs_params)
        cover = values.astype(np.float64)
        rqim_marked = cover.copy()
        idx = construct_locations(clue, c_hs, n).indices
        rqim_marked[idx] = rqim_embed(cover[idx], bits, params).watermarked

        rows.append(
            (
                fraction,
                n,
                n,
                c_hs,
                empirical_swr(cover, rqim_marked),
                empirical_swr(cover, hs_marked.astype(np.float64)),
            )
        )
        logger.info(f"{fraction:g}%: C_R-QIM={n} C_HS={c_hs}")
    header = ("fraction", "host_length", "c_rqim", "c_hs", "swr_rqim_db", "swr_hs_db")
    _emit_csv(write_csv(rows, header=header), out_csv)
    return EXIT_OK


@cli.command("distortion")
@click.option("--delta", type=float, default=DEFAULT_DELTA, show_default=True)
@click.option("--alpha", type=float, default=DEFAULT_ALPHA, show_default=True)
@click.option("--m-card", type=int, default=DEFAULT_M_CARD, show_default=True)
@click.option("--samples", type=int, default=DEFAULT_SAMPLES, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--grid", is_flag=True, help="Evenly spaced covers instead of random ones")
@click.option("--out-csv", type=_PATH, default=None)
def cmd_distortion(delta, alpha, m_card, samples, seed, grid, out_csv):
    """Monte-Carlo embedding distortion against both closed forms"""
    report = measure_distortion(QimParams(delta=delta, m_card=m_card, alpha=alpha), samples, seed, grid)
    rows = [
        ("mse_measured", report.mse),
        ("mse_alpha_form", report.closed_form),
        ("mse_alpha_squared_form", report.derived),
        ("max_error", report.max_error),
        ("max_error_bound", report.bound),
        ("samples", report.samples),
    ]
    _emit_csv(write_csv(rows, header=("quantity", "value")), out_csv)
    return EXIT_OK


@cli.command("sweep")
@click.option("--alphas", callback=_float_list, default="0.6,0.7,0.8,0.8675,0.9,1.0")
@click.option("--deltas", callback=_float_list, default="0.5,1,1.5,1.7320508075688772,3,5")
@click.option("--p-values", callback=_float_list, default="0.01,0.1,0.25,0.4")
@click.option("--out-csv", type=_PATH, default=None)
def cmd_sweep(alphas, deltas, p_values, out_csv):
    """Watermark powers and SWR gap of HS vs R-QIM over an alpha/delta/p grid"""
    header = ("alpha", "delta", "p_iii", "hs_power", "rqim_power", "gap", "rqim_better")
    _emit_csv(write_csv(swr_sweep(alphas, deltas, p_values), header=header), out_csv)
    return EXIT_OK


@cli.command("usability")
@click.option("--trials", type=int, default=100, show_default=True)
@click.option("--samples", type=int, default=10_000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--pair-index", type=int, default=USABILITY_PAIR_INDEX, show_default=True)
@click.option("--digits", type=int, default=DEFAULT_DIGITS, show_default=True)
@click.option("--out-csv", type=_PATH, default=None)
def cmd_usability(trials, samples, seed, pair_index, digits, out_csv):
    """Repeated normality tests of preprocessed N(0,1) samples"""
    results = usability_trials(trials, samples, seed, pair_index, digits)
    rows = [(r.trial, r.skewness, r.kurtosis, r.ks_p, r.jb_p, r.qq_r2) for r in results]
    header = ("trial", "skewness", "kurtosis", "ks_p", "jb_p", "qq_r2")
    _emit_csv(write_csv(rows, header=header), out_csv)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI and return its exit code"""
    try:
        rv = cli.main(args=list(argv) if argv is not None else None, prog_name="rqim", standalone_mode=False)
    except click.exceptions.UsageError as e:
        e.show()
        return EXIT_USAGE
    except click.exceptions.Abort:
        return EXIT_USAGE
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except RqimError as e:
        logger.error(f"{type(e).__name__}: {e}", exc_info=True)
        click.echo(f"error: {e}", err=True)
        return e.exit_code
    except OSError as e:
        logger.error(f"I/O failure: {e}", exc_info=True)
        click.echo(f"error: {e}", err=True)
        return EXIT_FORMAT
    return rv if isinstance(rv, int) else EXIT_OK
