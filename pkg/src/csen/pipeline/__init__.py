"""Persistence, report rendering and the command-line interface."""

from .persistence import FORMAT_VERSION, MAGIC, load_model, read_header, save_model
from .report import (
    REPORT_FORMATS,
    read_report_csv,
    render_report,
    report_to_dict,
    reports_equal,
    write_report,
)
