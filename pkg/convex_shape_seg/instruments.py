import logging
import os
from typing import List, Optional

import numpy as np

from convex_shape_seg.modules import file
from convex_shape_seg.modules.grid import BinaryField
from convex_shape_seg.types import IterationRecord, RunReport

logger = logging.getLogger(__name__)

BASE_DIR = os.environ.get("CONVEX_SEG_RESULTS_DIR", ".")


class SegmentationInstruments:
    """
    Output state of one segmentation run: where the mask, overlay, iteration
    log and report go, and the iteration records collected while solving.

    Usage:
        with SegmentationInstruments(out_mask, log_csv=...) as instruments:
            mask, report = solver.run(..., on_iteration=instruments.record)
            instruments.save(image, mask, report)

    Relative paths resolve against CONVEX_SEG_RESULTS_DIR. The CSV log is
    written on exit, also when the run failed, so partial runs keep their trace.
    """

    def __init__(
        self,
        out_mask: str,
        overlay: Optional[str] = None,
        log_csv: Optional[str] = None,
        report: Optional[str] = None,
        radii: Optional[List[float]] = None,
        base_dir: Optional[str] = None,
    ) -> None:
        self.base_dir = base_dir if base_dir is not None else BASE_DIR
        self.out_mask = self.get_file_path(out_mask)
        self.overlay = self.get_file_path(overlay) if overlay else None
        self.log_csv = self.get_file_path(log_csv) if log_csv else None
        self.report = self.get_file_path(report) if report else None
        self.radii = list(radii or [])
        self.records: List[IterationRecord] = []

    def __enter__(self):
        self.records = []
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.write_log()

    def get_file_path(self, fname: str) -> str:
        """
        Full path of an output file; absolute paths are kept as given.
        """
        return os.path.join(self.base_dir, fname)

    @property
    def written_files(self) -> List[str]:
        paths = [self.out_mask, self.overlay, self.log_csv, self.report]
        return [p for p in paths if p]

    # -------------------------- Run hooks -------------------------- #

    def record(self, record: IterationRecord):
        """
        on_iteration callback for the solver.
        """
        self.records.append(record)

    def write_log(self):
        if self.log_csv and self.records:
            file.write_iteration_log(self.log_csv, self.radii, self.records)
            logger.info(f"wrote {len(self.records)} iteration rows to {self.log_csv}")

    def save(self, image: np.ndarray, mask: BinaryField, report: RunReport):
        file.write_mask(self.out_mask, mask)
        if self.overlay:
            file.write_overlay(self.overlay, image, mask)
        if self.report:
            file.write_report(self.report, report)
