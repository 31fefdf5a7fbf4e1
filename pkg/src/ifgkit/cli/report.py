"""
Aligned plain-text tables for the results the commands print.
"""

from typing import Sequence


def format_report(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    """
    Plain-text table with one left-aligned column per header cell and a
    dashed rule under the header.
    """
    widths = [len(h) for h in header]
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"Row {list(row)} has {len(row)} cells, header has {len(header)}")
        widths = [max(w, len(cell)) for w, cell in zip(widths, row)]

    def line(cells: Sequence[str]) -> str:
        return '  '.join(cell.ljust(w) for cell, w in zip(cells, widths)).rstrip()

    lines = [line(header), '  '.join('-' * w for w in widths)]
    lines.extend(line(row) for row in rows)
    return '\n'.join(lines) + '\n'


def print_report(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    table = format_report(header, rows)
    print(table, end='')
    return table
