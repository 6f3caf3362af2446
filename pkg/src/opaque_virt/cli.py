"""opaque-virt command line: record, weights, serve, match, align, generate, evaluate.

Exit codes: 0 on success, 1 for invalid input or configuration, 2 for
network and I/O failures. Command results go to standard output; logs and
error messages go to standard error.
"""

import argparse
import asyncio
import base64
import binascii
import signal
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Set

import structlog
from pydantic import ValidationError

from . import __version__
from .alignment import align
from .config_loader import CommandConfig, ConfigLoader, ConfigurationError
from .entropy import derive_weights, load_weights, save_weights, weights_table
from .errors import RuntimeFailure, ValidationFailure
from .evaluation import (
    compare_entropy_methods,
    evaluate,
    format_summary,
    generate_synthetic,
    sweep_scaler,
    write_report,
)
from .evaluation.crossval import SCALER_DEFAULTS
from .library import load_library, save_library
from .logging_config import LOG_LEVELS, configure_logging
from .matcher import Matcher
from .models import (
    Endpoint,
    EntropyMethod,
    EvaluationConfig,
    FramingMode,
    FramingSpec,
    MatcherConfig,
    MatchStrategy,
    ProtocolKind,
    ScalerKind,
    ScalerSpec,
    ScoringParams,
    StrategySpec,
    SyntheticProtocolSpec,
    WeightsVector,
)
from .wire import Emulator, EmulatorStats, LibraryWriter, RecordingProxy

logger = structlog.get_logger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

FRAMING_ALIASES = {
    "conn": FramingMode.CONNECTION_PER_MESSAGE,
    "len": FramingMode.LENGTH_PREFIXED,
    "delim": FramingMode.DELIMITED,
}
STRATEGY_ALIASES = {
    "hash": MatchStrategy.HASH_LOOKUP,
    "nw": MatchStrategy.NW_PLAIN,
    "nw-weighted": MatchStrategy.NW_WEIGHTED,
}
SCALER_ALIASES = {
    "hyper": ScalerKind.HYPERBOLIC,
    "exp": ScalerKind.EXPONENTIAL,
}
KIND_ALIASES = {
    "directory": ProtocolKind.DIRECTORY_TEXT,
    "fixed": ProtocolKind.FIXED_WIDTH_BINARY,
}
GLOBAL_FLAGS = ("log_level", "log_json")


class UsageError(ValidationFailure):
    """Raised for missing or conflicting command-line flags."""
    pass


class ArgumentParser(argparse.ArgumentParser):
    """argparse parser whose usage errors exit with code 1."""

    subcommands: Dict[str, "ArgumentParser"]

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")

    def flag_actions(self) -> List[argparse.Action]:
        """Long-option actions other than --help."""
        return [
            action for action in self._actions
            if action.option_strings and action.dest not in ("help", "version", "config")
        ]


def _alias(table: Dict[str, Any], enum_cls) -> Callable[[str], Any]:
    """argparse type accepting a short alias or the enum value."""
    def convert(text: str):
        if text in table:
            return table[text]
        try:
            return enum_cls(text.replace("-", "_"))
        except ValueError:
            names = list(table) + [member.value for member in enum_cls]
            raise argparse.ArgumentTypeError(
                f"invalid choice '{text}' (choose from {', '.join(dict.fromkeys(names))})"
            )
    convert.__name__ = enum_cls.__name__
    return convert


def _endpoint(text: str) -> Endpoint:
    try:
        return Endpoint.parse(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def _csv(convert: Callable[[str], Any]) -> Callable[[str], List[Any]]:
    def parse(text: str) -> List[Any]:
        items = [item.strip() for item in text.split(",") if item.strip()]
        if not items:
            raise argparse.ArgumentTypeError("expected a comma separated list")
        try:
            return [convert(item) for item in items]
        except ValueError as e:
            raise argparse.ArgumentTypeError(str(e))
    parse.__name__ = "list"
    return parse


def _build(model_cls, **fields):
    """Construct a pydantic model, reporting failures as configuration errors."""
    try:
        return model_cls(**fields)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid {model_cls.__name__}: {e}") from e


def _require(args: argparse.Namespace, *names: str) -> None:
    missing = [f"--{name.replace('_', '-')}" for name in names if getattr(args, name) is None]
    if missing:
        raise UsageError(f"{args.command}: missing required flag(s): {', '.join(missing)}")


# Flag groups shared by several subcommands.

def _add_framing_flags(parser: ArgumentParser) -> None:
    group = parser.add_argument_group("framing")
    group.add_argument(
        "--framing", type=_alias(FRAMING_ALIASES, FramingMode), default=FramingMode.LENGTH_PREFIXED,
        metavar="{conn,len,delim}", help="message framing on the wire (default: len)",
    )
    group.add_argument("--delimiter", metavar="HEX", help="delimiter octets for --framing delim")
    group.add_argument(
        "--timeout-ms", type=int, default=500,
        help="response window after each request in milliseconds (default: 500)",
    )
    group.add_argument(
        "--max-message-bytes", type=int, default=1 << 20,
        help="largest accepted message (default: 1 MiB)",
    )


def _framing_spec(args: argparse.Namespace) -> FramingSpec:
    delimiter = b""
    if args.delimiter is not None:
        try:
            delimiter = bytes.fromhex(args.delimiter)
        except ValueError as e:
            raise UsageError(f"--delimiter must be hex octets: {e}") from e
    if delimiter and args.framing != FramingMode.DELIMITED:
        raise UsageError("--delimiter is only valid with --framing delim")
    return _build(
        FramingSpec,
        mode=args.framing,
        delimiter=delimiter,
        response_timeout_ms=args.timeout_ms,
        max_message_bytes=args.max_message_bytes,
    )


def _add_scoring_flags(parser: ArgumentParser) -> None:
    group = parser.add_argument_group("scoring")
    group.add_argument("--d-identical", type=float, default=1.0, help="score of identical octets")
    group.add_argument("--d-differing", type=float, default=-1.0, help="score of differing octets")
    group.add_argument("--d-gap", type=float, default=0.0, help="score of a gap (<= 0)")


def _scoring(args: argparse.Namespace) -> ScoringParams:
    return _build(
        ScoringParams, d_identical=args.d_identical, d_differing=args.d_differing, d_gap=args.d_gap
    )


# Scaler parameter name -> argparse dest. ``k`` clashes with the fold count of
# ``evaluate``, so it lives under ``scaler_k``.
SCALER_PARAM_DESTS = {"a": "a", "c": "c", "k": "scaler_k", "tau": "tau"}


def _add_weighting_flags(parser: ArgumentParser, short_k: bool = True) -> None:
    group = parser.add_argument_group("entropy weighting")
    group.add_argument(
        "--method", type=_alias({}, EntropyMethod), default=EntropyMethod.SHANNON,
        metavar="{shannon,richness,simpson,simpson_raw}", help="column entropy (default: shannon)",
    )
    group.add_argument(
        "--scaler", type=_alias(SCALER_ALIASES, ScalerKind), default=ScalerKind.HYPERBOLIC,
        metavar="{hyper,exp,sigmoid,threshold}", help="scaling function (default: hyper)",
    )
    group.add_argument("--a", type=float, help="hyperbolic scaler parameter a")
    group.add_argument("--c", type=float, help="hyperbolic scaler parameter c")
    k_flags = ["--k", "--scaler-k"] if short_k else ["--scaler-k"]
    group.add_argument(
        *k_flags, dest="scaler_k", type=float, help="exponential or sigmoid scaler parameter k"
    )
    group.add_argument("--tau", type=float, help="sigmoid or threshold scaler parameter tau")


def _scaler(args: argparse.Namespace) -> ScalerSpec:
    """Scaler from flags; parameters left out take the sweep defaults."""
    params = dict(SCALER_DEFAULTS[args.scaler])
    given = {
        name: getattr(args, dest) for name, dest in SCALER_PARAM_DESTS.items()
        if getattr(args, dest) is not None
    }
    stray = [name for name in given if name not in params]
    if stray:
        flags = ", ".join(f"--{SCALER_PARAM_DESTS[name].replace('_', '-')}" for name in stray)
        raise UsageError(f"{flags} not used by the {args.scaler.value} scaler")
    params.update(given)
    return _build(ScalerSpec, kind=args.scaler, **params)


def _add_matcher_flags(parser: ArgumentParser) -> None:
    parser.add_argument("--library", help="interaction library file (required)")
    parser.add_argument(
        "--strategy", type=_alias(STRATEGY_ALIASES, MatchStrategy), default=MatchStrategy.NW_PLAIN,
        metavar="{hash,nw,nw-weighted}", help="response selection strategy (default: nw)",
    )
    parser.add_argument("--weights", help="weights file, required by nw-weighted")
    _add_scoring_flags(parser)


def _load_matcher(args: argparse.Namespace) -> Matcher:
    _require(args, "library")
    library = load_library(args.library)
    weights: Optional[WeightsVector] = None
    if args.weights is not None:
        weights = load_weights(args.weights)
        if weights.library_fingerprint and weights.library_fingerprint != library.fingerprint:
            logger.warning(
                "Weights were derived from a different library",
                weights=args.weights,
                library=args.library,
            )
    config = _build(MatcherConfig, strategy=args.strategy, scoring=_scoring(args), weights=weights)
    return Matcher(library, config)


def _stop_on_signals(stop: Callable[[], Any]) -> None:
    loop = asyncio.get_running_loop()
    for sig in (signal.SIGINT, signal.SIGTERM):
        try:
            loop.add_signal_handler(sig, lambda: asyncio.ensure_future(stop()))
        except (NotImplementedError, RuntimeError, ValueError):
            pass


# Subcommands.

def cmd_record(args: argparse.Namespace, config: CommandConfig) -> int:
    _require(args, "listen", "upstream", "out")
    framing = _framing_spec(args)

    async def record() -> None:
        writer = LibraryWriter.open(args.out)
        proxy = RecordingProxy(
            args.listen,
            args.upstream,
            framing,
            writer,
            retry=config.retry,
            circuit_breaker=config.circuit_breaker,
            connect_timeout=args.connect_timeout,
        )
        try:
            await proxy.start()
            _stop_on_signals(proxy.stop)
            await proxy.serve_forever()
        finally:
            writer.close()
        logger.info("Recording finished", path=args.out, recorded=writer.recorded)

    asyncio.run(record())
    return EXIT_OK


def cmd_weights(args: argparse.Namespace, config: CommandConfig) -> int:
    _require(args, "library")
    if args.out is None and not args.show:
        raise UsageError("weights: give --out, --show or both")
    scaler = _scaler(args)
    library = load_library(args.library)
    if args.out is not None:
        weights = derive_weights(library, args.method, scaler)
        save_weights(weights, args.out)
        logger.info("Weights derived", method=args.method.value, scaler=scaler.describe(), columns=weights.length)
    if args.show:
        print(f"{'column':>6}  {'entropy':>10}  {'normalised':>10}  {'weight':>12}")
        for row in weights_table(library, args.method, scaler):
            print(
                f"{row['column']:>6}  {row['entropy']:>10.6f}  "
                f"{row['normalised']:>10.6f}  {row['weight']:>12.6g}"
            )
    return EXIT_OK


def cmd_serve(args: argparse.Namespace, config: CommandConfig) -> int:
    _require(args, "listen")
    framing = _framing_spec(args)
    matcher = _load_matcher(args)

    async def serve() -> None:
        stats = EmulatorStats()
        emulator = Emulator(args.listen, matcher, framing)
        emulator.attach(stats)
        admin = None
        if args.admin_port is not None:
            # Imported here so offline subcommands do not pull in the web stack.
            from .api import AdminContext, AdminServer

            admin = AdminServer(
                AdminContext(matcher, stats, matcher.config.weights),
                Endpoint(host=args.admin_host, port=args.admin_port),
            )

        await emulator.start()
        try:
            if admin is not None:
                await admin.start()
            _stop_on_signals(emulator.stop)
            await emulator.serve_forever()
        except BaseException:
            await emulator.stop()
            raise
        finally:
            if admin is not None:
                await admin.stop()

    asyncio.run(serve())
    return EXIT_OK


def _read_request(args: argparse.Namespace) -> bytes:
    if args.request is not None and args.request_file is not None:
        raise UsageError("match: --request and --request-file are mutually exclusive")
    if args.request is not None:
        try:
            payload = base64.b64decode(args.request, validate=True)
        except (binascii.Error, ValueError) as e:
            raise UsageError(f"--request is not valid base64: {e}") from e
    elif args.request_file is not None:
        payload = Path(args.request_file).read_bytes()
    else:
        raise UsageError("match: give --request or --request-file")
    if not payload:
        raise UsageError("match: the request is empty")
    return payload


def cmd_match(args: argparse.Namespace, config: CommandConfig) -> int:
    request = _read_request(args)
    matcher = _load_matcher(args)
    selection = matcher.select(request, include_candidates=args.candidates)
    report = selection.report
    print(f"index: {report.selected_index if report.matched else 'none'}")
    print(f"distance: {report.distance:.6f}" if report.distance is not None else "distance: none")
    print(f"no_response: {str(selection.no_response).lower()}")
    print(f"response: {base64.b64encode(selection.response).decode('ascii')}")
    if args.candidates and report.per_candidate is not None:
        print("index,distance")
        for index, value in report.per_candidate:
            print(f"{index},{value:.6f}")
    return EXIT_OK


def cmd_align(args: argparse.Namespace, config: CommandConfig) -> int:
    _require(args, "a", "b")
    if args.hex:
        try:
            m1, m2 = bytes.fromhex(args.a), bytes.fromhex(args.b)
        except ValueError as e:
            raise UsageError(f"--a/--b must be hex octets with --hex: {e}") from e
    else:
        m1, m2 = args.a.encode("utf-8"), args.b.encode("utf-8")
    weights = load_weights(args.weights) if args.weights is not None else None
    result = align(m1, m2, _scoring(args), weights)
    line_a, line_b = result.render(gap="-")
    print(line_a)
    print(line_b)
    print(f"score: {result.score:g}")
    return EXIT_OK


def cmd_generate(args: argparse.Namespace, config: CommandConfig) -> int:
    _require(args, "kind", "out")
    spec = _build(
        SyntheticProtocolSpec,
        kind=args.kind,
        n_interactions=args.n,
        n_operation_types=args.ops,
        seed=args.seed,
        opcodes=args.opcodes,
    )
    save_library(generate_synthetic(spec), args.out)
    return EXIT_OK


def _evaluation_library(args: argparse.Namespace):
    """Library, protocol kind and report label for ``--dataset``."""
    dataset = args.dataset
    if dataset.startswith("gen:"):
        kind = _alias(KIND_ALIASES, ProtocolKind)
        try:
            protocol = kind(dataset[len("gen:"):])
        except argparse.ArgumentTypeError as e:
            raise UsageError(f"--dataset {dataset}: {e}") from e
        spec = _build(
            SyntheticProtocolSpec,
            kind=protocol,
            n_interactions=args.n,
            n_operation_types=args.ops,
            seed=args.gen_seed,
        )
        label = f"{dataset}(n={args.n},ops={args.ops},seed={args.gen_seed})"
        return generate_synthetic(spec), protocol, label
    if args.kind is None:
        raise UsageError("evaluate: --kind is required when --dataset is a file")
    return load_library(dataset), args.kind, dataset


def _strategy_specs(args: argparse.Namespace, scaler: ScalerSpec) -> List[StrategySpec]:
    specs = []
    for strategy in dict.fromkeys(args.strategies):
        if strategy == MatchStrategy.NW_WEIGHTED:
            specs.append(_build(
                StrategySpec, strategy=strategy, scoring=_scoring(args), method=args.method, scaler=scaler
            ))
        else:
            specs.append(_build(StrategySpec, strategy=strategy, scoring=_scoring(args)))
    return specs


def _parse_sweep(text: str):
    """``hyperbolic.c=1,2,5`` -> (ScalerKind.HYPERBOLIC, "c", [1.0, 2.0, 5.0])."""
    target, sep, values = text.partition("=")
    kind_name, dot, parameter = target.partition(".")
    if not sep or not dot or not parameter:
        raise UsageError(f"--sweep must look like KIND.PARAM=V1,V2,...: {text}")
    try:
        scaler_kind = _alias(SCALER_ALIASES, ScalerKind)(kind_name)
        grid = _csv(float)(values)
    except argparse.ArgumentTypeError as e:
        raise UsageError(f"--sweep {text}: {e}") from e
    return scaler_kind, parameter, grid


def cmd_evaluate(args: argparse.Namespace, config: CommandConfig) -> int:
    _require(args, "dataset")
    if args.entropy_methods is not None and args.sweep is not None:
        raise UsageError("evaluate: --entropy-methods and --sweep are mutually exclusive")
    if args.workers < 1:
        raise UsageError("evaluate: --workers must be at least 1")
    scaler = _scaler(args)
    sweep = _parse_sweep(args.sweep) if args.sweep is not None else None
    eval_config = _build(
        EvaluationConfig,
        k=args.k,
        repeats=args.repeats,
        seeds=args.seeds or [],
        strategies=_strategy_specs(args, scaler),
    )
    library, kind, label = _evaluation_library(args)

    options = {"dataset": label, "workers": args.workers}
    if args.entropy_methods is not None:
        report = compare_entropy_methods(
            library, kind, scaler, eval_config, args.entropy_methods, **options
        )
    elif sweep is not None:
        scaler_kind, parameter, values = sweep
        report = sweep_scaler(
            library, kind, args.method, scaler_kind, parameter, values, eval_config,
            base=scaler, **options,
        )
    else:
        report = evaluate(library, eval_config, kind, **options)

    if args.report is not None:
        write_report(report, args.report)
    sys.stdout.write(format_summary(report))
    return EXIT_OK


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="opaque-virt",
        description="Opaque service virtualisation: record, match and replay raw TCP interactions.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="JSON or YAML file whose keys mirror long flags")
    parser.add_argument(
        "--log-level", choices=LOG_LEVELS, default="info", help="log verbosity (default: info)"
    )
    parser.add_argument("--log-json", action="store_true", help="emit logs as JSON lines")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    record = sub.add_parser("record", help="capture interactions through a recording proxy")
    record.add_argument("--listen", type=_endpoint, help="HOST:PORT for clients (required)")
    record.add_argument("--upstream", type=_endpoint, help="HOST:PORT of the real service (required)")
    record.add_argument("--out", help="library file records are appended to (required)")
    record.add_argument(
        "--connect-timeout", type=float, default=5.0, help="upstream connect timeout in seconds"
    )
    _add_framing_flags(record)
    record.set_defaults(handler=cmd_record)

    weights = sub.add_parser("weights", help="derive entropy weights from a library")
    weights.add_argument("--library", help="interaction library file (required)")
    weights.add_argument("--out", help="weights file to write")
    weights.add_argument("--show", action="store_true", help="print the per-column table")
    _add_weighting_flags(weights)
    weights.set_defaults(handler=cmd_weights)

    serve = sub.add_parser("serve", help="run the emulator")
    serve.add_argument("--listen", type=_endpoint, help="HOST:PORT to serve on (required)")
    _add_matcher_flags(serve)
    _add_framing_flags(serve)
    serve.add_argument("--admin-port", type=int, help="also serve the HTTP admin API on this port")
    serve.add_argument("--admin-host", default="127.0.0.1", help="admin API bind address")
    serve.set_defaults(handler=cmd_serve)

    match = sub.add_parser("match", help="select a response for one request offline")
    match.add_argument("--request", help="request octets, base64")
    match.add_argument("--request-file", help="file holding the raw request octets")
    match.add_argument(
        "--candidates", action="store_true", help="also print every candidate distance as CSV"
    )
    _add_matcher_flags(match)
    match.set_defaults(handler=cmd_match)

    align_cmd = sub.add_parser("align", help="align two messages and print the score")
    align_cmd.add_argument("--a", help="first message (required)")
    align_cmd.add_argument("--b", help="second message (required)")
    align_cmd.add_argument("--hex", action="store_true", help="read --a and --b as hex octets")
    align_cmd.add_argument("--weights", help="weights file for a weighted alignment")
    _add_scoring_flags(align_cmd)
    align_cmd.set_defaults(handler=cmd_align)

    generate = sub.add_parser("generate", help="write a synthetic interaction library")
    generate.add_argument(
        "--kind", type=_alias(KIND_ALIASES, ProtocolKind),
        metavar="{directory,fixed}", help="protocol family (required)",
    )
    generate.add_argument("--n", type=int, default=1000, help="number of interactions")
    generate.add_argument("--ops", type=int, default=6, help="number of operation types")
    generate.add_argument("--seed", type=int, default=0, help="generator seed")
    generate.add_argument("--opcodes", help="directory opcode letters (default: SADMCB)")
    generate.add_argument("--out", help="library file to write (required)")
    generate.set_defaults(handler=cmd_generate)

    evaluate_cmd = sub.add_parser("evaluate", help="cross-validate matching strategies")
    evaluate_cmd.add_argument(
        "--dataset", help="gen:directory, gen:fixed or a library FILE (required)"
    )
    evaluate_cmd.add_argument(
        "--kind", type=_alias(KIND_ALIASES, ProtocolKind),
        metavar="{directory,fixed}", help="protocol of a library FILE",
    )
    evaluate_cmd.add_argument("--n", type=int, default=1000, help="generated interactions")
    evaluate_cmd.add_argument("--ops", type=int, default=6, help="generated operation types")
    evaluate_cmd.add_argument("--gen-seed", type=int, default=0, help="generator seed")
    evaluate_cmd.add_argument(
        "--strategies", type=_csv(_alias(STRATEGY_ALIASES, MatchStrategy)),
        default=list(STRATEGY_ALIASES.values()), help="comma separated (default: hash,nw,nw-weighted)",
    )
    evaluate_cmd.add_argument("--k", type=int, default=10, help="folds (default: 10)")
    evaluate_cmd.add_argument("--repeats", type=int, default=10, help="repeats (default: 10)")
    evaluate_cmd.add_argument("--seeds", type=_csv(int), help="one seed per repeat, comma separated")
    evaluate_cmd.add_argument("--report", help="report file (.csv or .json)")
    evaluate_cmd.add_argument(
        "--entropy-methods", type=_csv(_alias({}, EntropyMethod)),
        help="compare these entropy methods against plain NW",
    )
    evaluate_cmd.add_argument("--sweep", help="scaler sweep such as hyperbolic.c=1,2,5,10,20")
    evaluate_cmd.add_argument("--workers", type=int, default=1, help="threads evaluating folds")
    _add_weighting_flags(evaluate_cmd, short_k=False)
    _add_scoring_flags(evaluate_cmd)
    evaluate_cmd.set_defaults(handler=cmd_evaluate)

    parser.subcommands = sub.choices
    return parser


def _peek_config(argv: Sequence[str]) -> Optional[str]:
    peek = ArgumentParser(add_help=False, allow_abbrev=False)
    peek.add_argument("--config")
    known, _ = peek.parse_known_args(argv)
    return known.config


def _config_default(action: argparse.Action, value: Any) -> Any:
    """Render a config value the way argparse would receive it on the command line."""
    if action.nargs == 0:
        if not isinstance(value, bool):
            raise ConfigurationError(f"Configuration key '{action.dest}' must be true or false")
        return value
    if isinstance(value, list):
        return ",".join(str(item) for item in value)
    return str(value)


def _apply_config(parser: ArgumentParser, path: str) -> CommandConfig:
    """Install config values as parser defaults so explicit flags still win."""
    owners: Dict[str, List[ArgumentParser]] = {}
    actions: Dict[str, argparse.Action] = {}
    for target in [parser, *parser.subcommands.values()]:
        for action in target.flag_actions():
            owners.setdefault(action.dest, []).append(target)
            actions[action.dest] = action
    config = ConfigLoader.load_from_file(path, owners)
    for dest, value in config.flags.items():
        default = _config_default(actions[dest], value)
        for target in owners[dest]:
            target.set_defaults(**{dest: default})
    return config


def _check_config_scope(parser: ArgumentParser, command: str, config: CommandConfig) -> None:
    accepted: Set[str] = {action.dest for action in parser.subcommands[command].flag_actions()}
    accepted.update(GLOBAL_FLAGS)
    foreign = sorted(set(config.flags) - accepted)
    if foreign:
        raise ConfigurationError(
            f"Configuration key(s) not accepted by '{command}': {', '.join(foreign)}"
        )
    if command != "record" and (config.retry is not None or config.circuit_breaker is not None):
        raise ConfigurationError("retry and circuit_breaker sections only apply to 'record'")


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, dispatch to the subcommand and return the exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        config = CommandConfig()
        config_path = _peek_config(argv)
        if config_path is not None:
            config = _apply_config(parser, config_path)
        args = parser.parse_args(argv)
        configure_logging(args.log_level, args.log_json)
        if config_path is not None:
            _check_config_scope(parser, args.command, config)
        return args.handler(args, config)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_VALIDATION
    except ValidationFailure as e:
        print(f"opaque-virt: error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (RuntimeFailure, OSError) as e:
        print(f"opaque-virt: error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except KeyboardInterrupt:
        return EXIT_OK


def main() -> None:
    """Console script entry point."""
    sys.exit(run())


if __name__ == "__main__":
    main()
