"""Argument parsing."""
import argparse
import logging

from . import VERSION


def add_standard_arguments(parser: argparse.ArgumentParser):
    """Add ``--version`` and the ``--debug`` / ``--quiet`` log level switches shared by every ``smcl`` subcommand."""
    parser.add_argument("--version", action="version", version=VERSION)
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument(
        "-d",
        "--debug",
        action="store_const",
        const=logging.DEBUG,
        default=logging.INFO,
        dest="loglevel",
        help="log every gate decision and the wall time of each filter update",
    )
    verbosity.add_argument(
        "-q",
        "--quiet",
        action="store_const",
        const=logging.WARNING,
        dest="loglevel",
        help="only report warnings and errors, hiding per-run convergence summaries",
    )


def add_config_argument(parser: argparse.ArgumentParser):
    """Add the ``--config`` option naming a YAML parameter file to ``parser``."""
    parser.add_argument(
        "--config",
        help="YAML file with 'filter', 'sensor_model', 'camera' and 'simulation' sections; "
        "missing keys keep their defaults.",
    )


def add_world_arguments(parser: argparse.ArgumentParser):
    """Add the options selecting a map: a bundled world or an image + annotation pair."""
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--world", help="name of a bundled world, e.g. demo_office or twin_rooms")
    group.add_argument("--map", dest="map_image", help="8-bit grayscale map image (PGM or PNG)")
    parser.add_argument("--annotations", help="JSON annotation sidecar of --map")
