from .cka import CKAAccumulator, CKAMatrix, cka_heatmap, cka_linear
from .grid import CellResult, GridSpec, cell_run_id, grid_run, load_grid, write_grid_csv
from .reports import (
    GapEntry,
    GapReport,
    RunSummary,
    emit_report,
    gap_table,
    summarize_run,
    write_cka_csv,
    write_gap_csv,
    write_gap_vs_scale_csv,
    write_runs_csv,
)

__all__ = [
    "CKAAccumulator",
    "CKAMatrix",
    "cka_heatmap",
    "cka_linear",
    "CellResult",
    "GridSpec",
    "cell_run_id",
    "grid_run",
    "load_grid",
    "write_grid_csv",
    "GapEntry",
    "GapReport",
    "RunSummary",
    "emit_report",
    "gap_table",
    "summarize_run",
    "write_cka_csv",
    "write_gap_csv",
    "write_gap_vs_scale_csv",
    "write_runs_csv",
]
