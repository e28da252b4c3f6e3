from .config import SweepConfig
from .probes import PROBE_COLUMNS, ProbeRow, probes_csv, read_probes, run_probes
from .render import render_report, summary_text
from .sweep import Cell, RunRecord, assemble, cells_for, prepare, run_cell, run_sweep

__all__ = [
    "SweepConfig", "PROBE_COLUMNS", "ProbeRow", "probes_csv", "read_probes", "run_probes", "render_report",
    "summary_text", "Cell", "RunRecord", "assemble", "cells_for", "prepare", "run_cell", "run_sweep",
]
