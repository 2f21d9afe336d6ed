#!/bin/env python

import logging
from typing import Iterable, Mapping, Sequence

from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

# Initialize the console
console = Console()

PACKAGE_LOGGER = "cbfaw"


def setup_logging(level: str = "WARNING") -> logging.Logger:
    """
    Route the package logger through a RichHandler on the shared console.

    Args:
        level (str): Logging level name, e.g. "WARNING", "INFO", "DEBUG".

    Preconditions:
        - level is a valid logging level name.

    Side effects:
        - Attaches a RichHandler to the "cbfaw" logger the first time it is called.
        - Sets the level of the "cbfaw" logger.

    Exceptions:
        None.

    Returns:
        logging.Logger: The package logger.
    """
    logger = logging.getLogger(PACKAGE_LOGGER)
    if not any(isinstance(h, RichHandler) for h in logger.handlers):
        handler = RichHandler(
            console=console,
            show_time=False,
            show_level=False,
            show_path=False,
            markup=True,
        )
        handler.setFormatter(logging.Formatter("%(message)s"))
        logger.addHandler(handler)
        logger.propagate = False
    logger.setLevel(level)
    return logger


def print_key_values(
    console: Console, title: str, values: Mapping[str, object]
) -> None:
    """
    Print a two-column table of named values.
    """
    table = Table(title=title, show_header=False)
    table.add_column("key", style="bold")
    table.add_column("value", style="green")
    for key, value in values.items():
        table.add_row(key, _format_value(value))
    console.print(table)


def print_rows(
    console: Console,
    title: str,
    header: Sequence[str],
    rows: Iterable[Sequence[object]],
) -> None:
    """
    Print a table with a header row.
    """
    table = Table(title=title)
    for name in header:
        table.add_column(name)
    for row in rows:
        table.add_row(*(_format_value(v) for v in row))
    console.print(table)


def _format_value(value: object) -> str:
    if isinstance(value, bool):
        return "[bold green]pass[/bold green]" if value else "[red bold]FAIL[/red bold]"
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, complex):
        return f"{value.real:.6g}{value.imag:+.6g}j"
    return str(value)
