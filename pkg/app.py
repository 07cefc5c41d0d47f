"""
fastcorr - Command Line Application
Synthesize shift-add plans for template banks, apply and stream them,
detect templates in signals and benchmark operation counts.
"""
import logging
import sys
from typing import Callable, Dict, List, Optional, Tuple

import click

from config import RunConfig, get_config
from models import CostPolicy, CostTally
from services.benchmark import (
    DEFAULT_DIGITS, DEFAULT_SIZES, baseline_table, bench_sweep, parse_sizes, rows_to_csv
)
from services.classifier import classify_signal
from services.exceptions import InputError, InvariantViolation
from services.plan_execution import evaluate_plan, verify_equivalence
from services.plan_synthesis import synthesize_plan
from services.quantization import quantize_matrix
from services.stream_engine import stream_cost_summary, stream_init, stream_signal
from utils.file_io import (
    atomic_write_text, events_to_csv, load_plan, read_matrix_csv, read_signal, read_vector,
    save_plan, stream_steps_to_csv, vector_to_csv, write_signal
)
from utils.signal_generator import gen_test_signal, parse_placements

logger = logging.getLogger(__name__)

settings = get_config()

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_INVARIANT_VIOLATION = 2


def configure_logging(level: Optional[str] = None) -> None:
    """Send log records to standard error so CSV on standard output stays clean."""
    logging.basicConfig(
        level=getattr(logging, (level or settings.LOG_LEVEL).upper(), logging.INFO),
        format='[%(asctime)s] %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S',
        stream=sys.stderr
    )


def _emit(config: RunConfig, text: str) -> None:
    """Write command output to --out atomically, or to standard output."""
    if config.out:
        atomic_write_text(config.out, text)
        logger.info(f"[IO] Wrote {config.out}")
    else:
        click.echo(text, nl=False)


def _describe_tally(tally: CostTally) -> str:
    return f"multiplies={tally.multiplies} adds={tally.adds} shifts={tally.shifts}"


def _policy(config: RunConfig) -> CostPolicy:
    return CostPolicy(config.count_shifts_as_multiplies, settings.CSE_MAX_PASSES)


def _load_matrix(config: RunConfig, digits: int, base: int):
    return quantize_matrix(read_matrix_csv(config.matrix), digits, base, normalize=config.normalize)


def _synth(config: RunConfig) -> int:
    matrix = _load_matrix(config, config.digits, config.base)
    plan = synthesize_plan(matrix, _policy(config))

    trials = settings.VERIFY_TRIALS if config.trials is None else config.trials
    report = verify_equivalence(plan, matrix, trials, config.seed)
    if not report.passed:
        raise InvariantViolation(f"synthesized plan failed its self-check: {report.describe()}")

    if config.out:
        save_plan(config.out, plan)
        logger.info(f"[IO] Wrote plan to {config.out}")
    else:
        click.echo(plan.to_json(), nl=False)
    click.echo(_describe_tally(plan.cost), err=True)
    return EXIT_OK


def _apply(config: RunConfig) -> int:
    plan = load_plan(config.plan)
    result = evaluate_plan(plan, read_vector(config.vector, config.signal_format))
    _emit(config, vector_to_csv(result.values))
    click.echo(_describe_tally(result.tally), err=True)
    return EXIT_OK


def _stream(config: RunConfig) -> int:
    plan = load_plan(config.plan)
    samples = read_signal(config.signal, config.signal_format)
    state = stream_init(plan)
    steps = list(stream_signal(plan, samples, state))
    if not steps:
        logger.warning(f"[STREAM] Signal has {len(samples)} sample(s), fewer than m={plan.m}; no window emitted")

    if config.summary:
        if not steps:
            raise InputError(f"{config.signal}: too short for a cost summary (need at least {plan.m} samples)")
        summary = stream_cost_summary(state)
        lines = ['metric,value']
        lines.extend(f"{name},{value}" for name, value in summary.as_dict().items() if name != 'total')
        lines.extend(f"total_{name},{value}" for name, value in summary.total.as_dict().items())
        _emit(config, '\n'.join(lines) + '\n')
    else:
        _emit(config, stream_steps_to_csv(steps, plan.K, normalized=config.normalized_output))
    return EXIT_OK


def _classify(config: RunConfig) -> int:
    plan = load_plan(config.plan)
    samples = read_signal(config.signal, config.signal_format)
    events, summary = classify_signal(plan, samples, config.threshold, config.refractory)
    _emit(config, events_to_csv(events))
    if summary is not None:
        click.echo(f"windows={summary.windows} events={len(events)} "
                   f"multiplies_per_step={summary.multiplies_per_step:.3f} "
                   f"cache_hit_rate={summary.cache_hit_rate:.3f}", err=True)
    return EXIT_OK


def _bench(config: RunConfig) -> int:
    rows = bench_sweep(
        config.sizes or DEFAULT_SIZES,
        config.digit_sweep or DEFAULT_DIGITS,
        trials=1 if config.trials is None else config.trials,
        seed=config.seed,
        base=config.base,
        stream_windows=config.stream_windows,
        workers=config.workers,
        policy=_policy(config),
    )
    _emit(config, rows_to_csv(rows))
    return EXIT_OK


def _verify(config: RunConfig) -> int:
    plan = load_plan(config.plan)
    matrix = _load_matrix(config, plan.digits, plan.base)
    trials = settings.VERIFY_TRIALS if config.trials is None else config.trials
    report = verify_equivalence(plan, matrix, trials, config.seed)
    if not report.passed:
        raise InvariantViolation(report.describe())
    click.echo(report.describe())
    return EXIT_OK


def _gen_signal(config: RunConfig) -> int:
    matrix = _load_matrix(config, config.digits, config.base)
    length = config.length
    if length is None:
        length = max((offset + matrix.m for offset, _ in config.placements), default=matrix.m)
    signal = gen_test_signal(matrix, config.placements, config.noise_sigma, config.seed, length)
    write_signal(config.out, signal, config.signal_format)
    logger.info(f"[IO] Wrote {length}-sample signal to {config.out}")
    return EXIT_OK


def _baselines(config: RunConfig) -> int:
    table = baseline_table(config.sizes or DEFAULT_SIZES, config.digits, config.seed, config.base, _policy(config))
    _emit(config, table)
    return EXIT_OK


HANDLERS: Dict[str, Callable[[RunConfig], int]] = {
    'synth': _synth,
    'apply': _apply,
    'stream': _stream,
    'classify': _classify,
    'bench': _bench,
    'verify': _verify,
    'gen-signal': _gen_signal,
    'baselines': _baselines,
}


def run(config: RunConfig) -> int:
    """
    Execute one command.

    Returns:
        int: 0 on success, 1 on input errors, 2 on invariant violations
    """
    try:
        config.validate()
        logger.debug(f"[CLI] Running {config.command}")
        return HANDLERS[config.command](config)
    except InputError as e:
        logger.error(f"[CLI] {config.command} failed: {e}")
        click.echo(f"error: {e}", err=True)
        return EXIT_INPUT_ERROR
    except InvariantViolation as e:
        logger.error(f"[CLI] {config.command} failed: {e}", exc_info=True)
        click.echo(f"internal error: {e}", err=True)
        return EXIT_INVARIANT_VIOLATION


def _sizes(value: Optional[str]) -> List[Tuple[int, int]]:
    return parse_sizes(value) if value else []


def _digit_list(value: Optional[str]) -> List[int]:
    if not value:
        return []
    try:
        return [int(part) for part in value.split(',') if part.strip()]
    except ValueError:
        raise InputError(f"--digits expects comma-separated integers, got {value!r}")


def _placements(value: Optional[str]) -> List[Tuple[int, int]]:
    return parse_placements(value) if value else []


out_option = click.option('--out', type=click.Path(dir_okay=False), help='Output file (default: standard output)')
base_option = click.option('--base', type=int, default=settings.DEFAULT_BASE, show_default=True, help='Radix, 2 or 10')
digits_option = click.option('--digits', type=int, default=settings.DEFAULT_DIGITS, show_default=True,
                             help='Fractional digits D kept per entry')
seed_option = click.option('--seed', type=int, default=settings.DEFAULT_SEED, show_default=True)
normalize_option = click.option('--normalize/--no-normalize', default=True, show_default=True,
                                help='Normalize template rows before quantizing')
format_option = click.option('--format', 'signal_format', type=click.Choice(['csv', 'f64']), default='csv',
                             show_default=True, help='Signal file format')
shifts_option = click.option('--count-shifts-as-mults', 'count_shifts', is_flag=True,
                             help='Count shift operations as multiplies')


def _finish(build: Callable[[], RunConfig]) -> None:
    """Build the invocation, run it and exit with its status."""
    try:
        config = build()
    except InputError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_INPUT_ERROR)
    code = run(config)
    if code != EXIT_OK:
        sys.exit(code)


class FastCorrGroup(click.Group):
    """Click group whose usage errors exit with the input-error status."""

    def make_context(self, *args, **kwargs):
        try:
            return super().make_context(*args, **kwargs)
        except click.UsageError as e:
            e.exit_code = EXIT_INPUT_ERROR
            raise

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except click.UsageError as e:
            e.exit_code = EXIT_INPUT_ERROR
            raise


@click.group(cls=FastCorrGroup)
@click.option('--log-level', default=None, help='Override LOG_LEVEL')
def cli(log_level):
    """Fast template-bank correlation with shift-add multiplication plans."""
    configure_logging(log_level)


@cli.command()
@click.option('--matrix', type=click.Path(), help='Template matrix CSV (one template per line)')
@out_option
@base_option
@digits_option
@normalize_option
@seed_option
@click.option('--trials', type=int, default=None, help='Self-check trials (default: VERIFY_TRIALS)')
@shifts_option
def synth(matrix, out, base, digits, normalize, seed, trials, count_shifts):
    """Synthesize a multiplication plan from a template matrix."""
    _finish(lambda: RunConfig('synth', matrix=matrix, out=out, base=base, digits=digits, normalize=normalize,
                              seed=seed, trials=trials, count_shifts_as_multiplies=count_shifts))


@cli.command()
@click.option('--plan', type=click.Path(), help='Plan JSON')
@click.option('--vector', type=click.Path(), help='Input vector file')
@click.option('--format', 'vector_format', type=click.Choice(['csv', 'f64']), default='csv',
              show_default=True, help='Vector file format')
@out_option
def apply(plan, vector, vector_format, out):
    """Evaluate a plan on one vector."""
    _finish(lambda: RunConfig('apply', plan=plan, vector=vector, signal_format=vector_format, out=out))


@cli.command()
@click.option('--plan', type=click.Path(), help='Plan JSON')
@click.option('--signal', type=click.Path(), help='Signal file')
@format_option
@out_option
@click.option('--normalized', is_flag=True, help='Write normalized correlations instead of raw ones')
@click.option('--summary', is_flag=True, help='Write the streaming cost summary instead of per-window rows')
def stream(plan, signal, signal_format, out, normalized, summary):
    """Correlate every window of a signal with the template bank."""
    _finish(lambda: RunConfig('stream', plan=plan, signal=signal, signal_format=signal_format, out=out,
                              normalized_output=normalized, summary=summary))


@cli.command()
@click.option('--plan', type=click.Path(), help='Plan JSON')
@click.option('--signal', type=click.Path(), help='Signal file')
@format_option
@out_option
@click.option('--threshold', type=float, default=settings.DEFAULT_THRESHOLD, show_default=True)
@click.option('--refractory', type=int, default=None, help='Minimum event spacing (default: m)')
def classify(plan, signal, signal_format, out, threshold, refractory):
    """Detect template occurrences in a signal."""
    _finish(lambda: RunConfig('classify', plan=plan, signal=signal, signal_format=signal_format, out=out,
                              threshold=threshold, refractory=refractory))


@cli.command()
@click.option('--sizes', help='KxM[,KxM...] (default: 4x16,16x16,64x16)')
@click.option('--digits', 'digit_sweep', help='Comma-separated D values (default: 1,2,3)')
@click.option('--trials', type=int, default=1, show_default=True)
@seed_option
@base_option
@click.option('--workers', type=int, default=settings.BENCH_WORKERS, show_default=True)
@click.option('--stream-windows', type=int, default=settings.BENCH_STREAM_WINDOWS, show_default=True)
@shifts_option
@out_option
def bench(sizes, digit_sweep, trials, seed, base, workers, stream_windows, count_shifts, out):
    """Sweep random template banks and write cost rows as CSV."""
    _finish(lambda: RunConfig('bench', sizes=_sizes(sizes), digit_sweep=_digit_list(digit_sweep),
                              trials=trials, seed=seed, base=base,
                              workers=workers, stream_windows=stream_windows,
                              count_shifts_as_multiplies=count_shifts, out=out))


@cli.command()
@click.option('--plan', type=click.Path(), help='Plan JSON')
@click.option('--matrix', type=click.Path(), help='Template matrix CSV the plan was built from')
@normalize_option
@seed_option
@click.option('--trials', type=int, default=None, help='Random vectors (default: VERIFY_TRIALS)')
def verify(plan, matrix, normalize, seed, trials):
    """Check a plan against the direct product on random vectors."""
    _finish(lambda: RunConfig('verify', plan=plan, matrix=matrix, normalize=normalize, seed=seed, trials=trials))


@cli.command('gen-signal')
@click.option('--matrix', type=click.Path(), help='Template matrix CSV')
@click.option('--out', type=click.Path(dir_okay=False), help='Signal file to write')
@click.option('--placements', help='offset:k[,offset:k...]')
@click.option('--noise', 'noise_sigma', type=float, default=0.0, show_default=True, help='Noise sigma')
@click.option('--length', type=int, default=None, help='Samples (default: end of last placement)')
@base_option
@digits_option
@normalize_option
@seed_option
@format_option
def gen_signal(matrix, out, placements, noise_sigma, length, base, digits, normalize, seed, signal_format):
    """Generate a test signal with templates embedded in noise."""
    _finish(lambda: RunConfig('gen-signal', matrix=matrix, out=out, placements=_placements(placements),
                              noise_sigma=noise_sigma,
                              length=length, base=base, digits=digits, normalize=normalize, seed=seed,
                              signal_format=signal_format))


@cli.command()
@click.option('--sizes', help='KxM[,KxM...] (default: 4x16,16x16,64x16)')
@digits_option
@base_option
@seed_option
@shifts_option
@out_option
def baselines(sizes, digits, base, seed, count_shifts, out):
    """Tabulate direct, Viterbi and synthesized-plan costs."""
    _finish(lambda: RunConfig('baselines', sizes=_sizes(sizes), digits=digits, base=base, seed=seed,
                              count_shifts_as_multiplies=count_shifts, out=out))


if __name__ == '__main__':
    cli()
