"""Formatters for different output types."""

from .base import BaseFormatter, OutputFormat
from .csvfile import CsvFormatter
from .factory import FormatterFactory
from .terminal import TerminalFormatter

__all__ = ["BaseFormatter", "OutputFormat", "TerminalFormatter", "CsvFormatter", "FormatterFactory"]
