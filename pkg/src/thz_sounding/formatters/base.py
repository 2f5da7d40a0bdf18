"""Base formatter classes for campaign reports."""

from abc import ABC, abstractmethod
from collections.abc import Sequence

from thz_sounding.chanmodel import FitReport, ModelTable, RealizationBatch
from thz_sounding.metrics import LinkRecord


class BaseFormatter(ABC):
    """Abstract base class for report formatters."""

    @abstractmethod
    def format_records(self, records: Sequence[LinkRecord]) -> str:
        """Format condensed link records.

        Args:
            records: Per-link condensed parameters

        Returns:
            Formatted records string
        """
        pass

    @abstractmethod
    def format_fits(self, reports: Sequence[FitReport]) -> str:
        """Format fit reports with their 95% confidence intervals.

        Args:
            reports: Fits keyed by model-table row

        Returns:
            Formatted fits string
        """
        pass

    @abstractmethod
    def format_model_table(self, table: ModelTable) -> str:
        """Format every row of a model table."""
        pass

    @abstractmethod
    def format_realizations(self, batch: RealizationBatch) -> str:
        """Format generated channel-parameter draws."""
        pass


class OutputFormat:
    """Enumeration of supported output formats."""

    TERMINAL = "terminal"
    CSV = "csv"
