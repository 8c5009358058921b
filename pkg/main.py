"""
KONTRAKTOR v1.0
===============
Kompilator małych kerneli tensorowych: od opisu w notacji Einsteina
do przenośnego kodu C99 z raportem flopów
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from config import (APP_DESCRIPTION, APP_NAME, APP_VERSION, CONFIG, DEFAULT_PATHS,
                    SUPPORTED_ALIGNMENTS, SUPPORTED_PRECISIONS, PipelineConfig)
from errors import KontraktorError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DIAGNOSTICS = 1
EXIT_INTERNAL = 2


def setup_logging(verbose: bool = False) -> None:
    handlers = [logging.StreamHandler()]
    try:
        DEFAULT_PATHS['logs_dir'].mkdir(parents=True, exist_ok=True)
        handlers.insert(0, logging.FileHandler(DEFAULT_PATHS['logs_dir'] / 'kontraktor.log', encoding='utf-8'))
    except OSError:
        pass
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='kontraktor', description=f"{APP_NAME} v{APP_VERSION} - {APP_DESCRIPTION}")
    parser.add_argument('--version', action='version', version=f"{APP_NAME} {APP_VERSION}")
    commands = parser.add_subparsers(dest='command', required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('source', help="plik .kernels albo korpus, np. corpus:seissol:order=4,simulations=8")
    common.add_argument('--precision', choices=SUPPORTED_PRECISIONS)
    common.add_argument('--align', type=int, choices=SUPPORTED_ALIGNMENTS)
    common.add_argument('--backend-order', help="priorytet backendów, np. libxsmm,pspamm,portable")
    common.add_argument('--out-dir', type=Path, default=None)
    common.add_argument('--emit', choices=['c99', 'none'])
    common.add_argument('--seed', type=int, default=0)
    common.add_argument('--workers', type=int)
    common.add_argument('--excel', action='store_true', help="dodatkowy raport Excel")
    common.add_argument('-v', '--verbose', action='store_true')

    commands.add_parser('compile', parents=[common], help="kompilacja, emisja kodu i raport")
    check = commands.add_parser('check', parents=[common], help="walidacja (opcjonalnie porównanie numeryczne)")
    check.add_argument('--numeric', action='store_true', help="uruchom kernele i porównaj z wersją naiwną")
    check.add_argument('--seeds', type=int, default=1)
    commands.add_parser('report', parents=[common], help="koszty bez emisji kodu")
    commands.add_parser('oracle', parents=[common], help="porównanie z pełnym przeszukaniem")
    return parser


def load_family(source: str, diagnostics: list):
    if source.startswith('corpus:'):
        from corpus import corpus_family
        return corpus_family(source[len('corpus:'):])
    from parsers import parse_file
    return parse_file(source, diagnostics)


def pipeline_config(args, emit: Optional[str] = None) -> PipelineConfig:
    priority = args.backend_order.split(',') if args.backend_order else None
    return PipelineConfig.from_app_config(
        CONFIG,
        precision=args.precision,
        alignment=args.align,
        backend_priority=priority,
        emit=emit or args.emit,
        workers=args.workers,
        excel_report=True if args.excel else None,
        output_dir=args.out_dir or DEFAULT_PATHS['output_dir'],
    )


def _print_diagnostics(diagnostics) -> bool:
    for diagnostic in diagnostics:
        print(str(diagnostic), file=sys.stderr)
    return any(d.severity == 'error' for d in diagnostics)


def cmd_compile(args, emit: Optional[str] = None) -> int:
    from pipeline import run_pipeline

    diagnostics: list = []
    family = load_family(args.source, diagnostics)
    result = run_pipeline(family, pipeline_config(args, emit))
    for artifact in result.artifacts:
        flops = artifact.flops
        print(f"{artifact.name:<24} niezerowe {flops.nonzero:>10}  sprzętowe {flops.hardware:>10}  "
              f"EQSPP {flops.eqspp_ratio:.3f}")
    for path in result.files:
        print(f"💾 {path}")
    failed = _print_diagnostics(diagnostics + result.all_diagnostics)
    return EXIT_DIAGNOSTICS if failed else EXIT_OK


def cmd_check(args) -> int:
    from validators import validate_family

    diagnostics: list = []
    family = load_family(args.source, diagnostics)
    config = pipeline_config(args)
    for result in validate_family(family, config.limits):
        diagnostics.extend(result.diagnostics)
    failed = _print_diagnostics(diagnostics)
    if failed or not args.numeric:
        if not failed:
            print(f"✅ {family.name}: {len(family.kernels)} kerneli poprawnych")
        return EXIT_DIAGNOSTICS if failed else EXIT_OK

    from kernel_checks import check_family
    from pipeline import run_pipeline

    result = run_pipeline(family, PipelineConfig.from_app_config(
        CONFIG, precision=args.precision, alignment=args.align, emit='none',
        json_report=False, excel_report=False))
    checks = check_family(result.artifacts, range(args.seed, args.seed + args.seeds))
    for check in checks:
        print(check.describe())
    failed = _print_diagnostics(result.all_diagnostics)
    return EXIT_DIAGNOSTICS if failed or not all(c.passed for c in checks) else EXIT_OK


def cmd_oracle(args) -> int:
    from pipeline import verify_family

    diagnostics: list = []
    family = load_family(args.source, diagnostics)
    rows = verify_family(family, pipeline_config(args, 'none'))
    mismatches = 0
    for row in rows:
        if row['oracle'] is None:
            status = "⚠️ pominięto"
        elif row['oracle'] == row['found']:
            status = "✅"
        else:
            status = "❌"
            mismatches += 1
        print(f"{status} {row['kernel']}#{row['statement']} {row['check']}: "
              f"znaleziono {row['found']}, wyrocznia {row['oracle']} {row.get('note', '')}".rstrip())
    failed = _print_diagnostics(diagnostics)
    return EXIT_DIAGNOSTICS if failed or mismatches else EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    logger.info(f"Uruchomiono {APP_NAME} v{APP_VERSION}: {args.command} {args.source}")
    try:
        if args.command == 'compile':
            return cmd_compile(args)
        if args.command == 'report':
            return cmd_compile(args, emit='none')
        if args.command == 'check':
            return cmd_check(args)
        return cmd_oracle(args)
    except KontraktorError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_DIAGNOSTICS
    except (OSError, ValueError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_DIAGNOSTICS
    except Exception as e:
        logger.exception(f"Błąd wewnętrzny: {e}")
        return EXIT_INTERNAL


if __name__ == '__main__':
    sys.exit(main())
