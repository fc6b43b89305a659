#!/usr/bin/env python3
"""
netlist-fi - SAT-based fault injection for gate-level netlists

Loads a cell library, a synthesized netlist and a fault specification,
injects every fault configuration the specification allows and reports the
configurations that are effective, with a witness input assignment for each.
"""

import logging
import sys
import argparse
from pathlib import Path
from typing import Optional

# Add src directory to Python path
sys.path.insert(0, str(Path(__file__).parent / "src"))


def setup_logging(level: str = "INFO", log_file: Optional[str] = "logs/netlist_fi.log") -> None:
    """Set up logging configuration."""
    handlers = [logging.StreamHandler()]
    if log_file:
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_path))

    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=handlers,
        force=True,
    )


def parse_arguments(argv=None) -> argparse.Namespace:
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(
        prog='netlist-fi',
        description='netlist-fi - SAT-based fault injection for gate-level netlists',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py demos --out demo                      # Write the demo circuits
  python main.py run --lib demo/demo_cells.lib --netlist demo/sp2v.v \\
                     --spec demo/sp2v_spec.json        # Run a campaign
  python main.py run ... --jobs 8 --report out.json    # Parallel, JSON report
  python main.py run ... --dump-target target          # Also write target.json/.dot

Exit codes: 0 = no effective faults, 2 = effective faults found, 1 = error
        """
    )
    subparsers = parser.add_subparsers(dest='command', required=True)

    run = subparsers.add_parser('run', help='Run a fault injection campaign')
    run.add_argument('--lib', required=True, help='Cell library (.lib or .json)')
    run.add_argument('--netlist', required=True, help='Netlist (.v or .json graph)')
    run.add_argument('--spec', required=True, help='Fault specification (.json)')
    run.add_argument('--top', help='Top module (default: the module no other module instantiates)')
    run.add_argument('--submodules', help='JSON file with functions of non-library submodules')
    run.add_argument('--config', help='Configuration file (default: config.ini if present)')
    run.add_argument('--simultaneous-faults', type=int, help='Override k of every fault model')
    run.add_argument('--jobs', type=int, help='Worker processes')
    run.add_argument('--max-faults', type=int, help='Evaluate at most N configurations per model')
    run.add_argument('--solver', help='internal or external:PATH')
    run.add_argument('--seed', type=int, help='Internal solver seed')
    run.add_argument('--report', help='Write the JSON report to this file')
    run.add_argument('--format', choices=['json', 'table'], default='table',
                     help='Report format on stdout (default: table)')
    run.add_argument('--chart', help='Write a PNG chart of the report')
    run.add_argument('--dump-target', metavar='F', help='Write the extracted targets as F_<model>.json/.dot')
    run.add_argument('--dump-differential', type=int, metavar='N',
                     help='Write the Nth differential graph and CNF of every model')
    run.add_argument('--dump-dir', default='.', help='Directory for --dump-differential (default: .)')
    run.add_argument('--verbose', '-v', action='store_true', help='Debug logging')

    demos = subparsers.add_parser('demos', help='Write the demo circuits and specifications')
    demos.add_argument('--out', required=True, help='Output directory')
    demos.add_argument('--verbose', '-v', action='store_true', help='Debug logging')

    return parser.parse_args(argv)


def run_command(args: argparse.Namespace, config: 'ConfigManager', logger: logging.Logger) -> int:
    """Run a campaign and return the exit code."""
    from src.campaign import (CampaignOptions, EXIT_ERROR, dump_differential, dump_target, exit_code,
                              run_campaign, summarize)
    from src.report_chart import generate_report_chart

    validation = config.validate_configuration()
    for warning in validation['warnings']:
        logger.warning(f"Configuration: {warning}")
    if not validation['valid']:
        for error in validation['errors']:
            logger.error(f"Configuration: {error}")
        return EXIT_ERROR

    options = CampaignOptions.from_config(
        config,
        jobs=args.jobs,
        max_faults=args.max_faults,
        simultaneous_faults=args.simultaneous_faults,
        solver_backend=args.solver,
        seed=args.seed,
        top=args.top,
        submodules=args.submodules,
    )

    if args.dump_target:
        for path in dump_target(args.lib, args.netlist, args.spec, args.dump_target, options):
            logger.info(f"Wrote {path}")
    if args.dump_differential is not None:
        dump_differential(args.lib, args.netlist, args.spec, args.dump_differential, args.dump_dir, options)

    report = run_campaign(args.lib, args.netlist, args.spec, options)

    if args.report:
        logger.info(f"Report written to {report.save(args.report)}")
    if args.format == 'json':
        print(report.to_json(), end='')
    else:
        print(summarize(report))
    if args.chart:
        generate_report_chart(report.to_dict(), args.chart)

    return exit_code(report)


def main(argv=None) -> int:
    """Main entry point for netlist-fi."""
    args = parse_arguments(argv)

    from src.config_manager import ConfigError, ConfigManager

    try:
        config = ConfigManager(getattr(args, 'config', None))
        logging_config = config.get_logging_config()
    except ConfigError as e:
        setup_logging()
        logging.getLogger(__name__).error(f"Fatal error: {e}")
        return 1

    setup_logging('DEBUG' if args.verbose else logging_config['log_level'], logging_config['log_file'])
    logger = logging.getLogger(__name__)
    logger.info(f"netlist-fi starting: {args.command}")
    logger.debug(f"Configuration: {config.get_all_config()}")

    try:
        if args.command == 'demos':
            from src.demo_circuits import generate_demos
            written = generate_demos(args.out)
            logger.info(f"Wrote {len(written)} demo files to {args.out}")
            return 0
        return run_command(args, config, logger)

    except KeyboardInterrupt:
        logger.info("Interrupted")
        return 1
    except Exception as e:
        logger.error(f"Fatal error: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
