"""CSV formatter: lossless 17-significant-digit tables via pandas."""

from collections.abc import Sequence

import pandas as pd

from thz_sounding.campaign import FLOAT_FORMAT, fits_frame, records_frame
from thz_sounding.chanmodel import FitReport, ModelTable, RealizationBatch
from thz_sounding.formatters.base import BaseFormatter
from thz_sounding.metrics import LinkRecord

TABLE_COLUMNS = ["parameter", "condition", "view", "kind", "estimator", "units", "alpha", "beta", "mu", "sigma"]


def model_table_frame(table: ModelTable) -> pd.DataFrame:
    rows = []
    for row in table.sorted_rows():
        doc = row.to_document()
        doc.pop("ci95", None)
        rows.append(doc)
    return pd.DataFrame(rows, columns=TABLE_COLUMNS)


class CsvFormatter(BaseFormatter):
    """Format reports as CSV text."""

    @staticmethod
    def _render(frame: pd.DataFrame) -> str:
        return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")

    def format_records(self, records: Sequence[LinkRecord]) -> str:
        return self._render(records_frame(records))

    def format_fits(self, reports: Sequence[FitReport]) -> str:
        return self._render(fits_frame(reports))

    def format_model_table(self, table: ModelTable) -> str:
        return self._render(model_table_frame(table))

    def format_realizations(self, batch: RealizationBatch) -> str:
        return self._render(batch.to_frame())
