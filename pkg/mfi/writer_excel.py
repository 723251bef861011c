"""
Excel workbook writer module.
Collects one study's configuration, importance map, MoRF curves and
convergence table into a single workbook with charts.
"""

import logging
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from openpyxl import Workbook
from openpyxl.chart import LineChart, Reference
from openpyxl.formatting.rule import ColorScaleRule
from openpyxl.styles import Alignment, Font, PatternFill
from openpyxl.utils import get_column_letter
from openpyxl.utils.dataframe import dataframe_to_rows

from .core import GRID, PO_MATRIX, ImportanceMap
from .evaluation import RANDOM, RELEVANCE, MorfCurve, area_over_curve
from .writer_csv import importance_frame, morf_frame

logger = logging.getLogger(__name__)


class StudyWorkbookWriter:
    """Writes an explanation study to an Excel workbook with multiple tabs."""

    def __init__(self, summary: Dict[str, Any], defaults_used: List[str], warnings: List[str],
                 importance: Optional[ImportanceMap] = None,
                 curves: Sequence[MorfCurve] = (),
                 convergence: Optional[pd.DataFrame] = None):
        self.summary = summary
        self.defaults_used = defaults_used
        self.warnings = warnings
        self.importance = importance
        self.curves = list(curves)
        self.convergence = convergence

        # Styling
        self.header_fill = PatternFill(start_color="366092", end_color="366092", fill_type="solid")
        self.header_font = Font(color="FFFFFF", bold=True)
        self.section_fill = PatternFill(start_color="D9E1F2", end_color="D9E1F2", fill_type="solid")
        self.section_font = Font(bold=True)

    def write_workbook(self, output_path: str):
        """Write complete workbook to file."""
        wb = Workbook()

        # Remove default sheet
        if 'Sheet' in wb.sheetnames:
            wb.remove(wb['Sheet'])

        self._create_summary_tab(wb)
        if self.importance is not None:
            self._create_importance_tab(wb)
        if self.curves:
            self._create_morf_tab(wb)
        if self.convergence is not None and len(self.convergence):
            self._create_convergence_tab(wb)
        self._create_audit_trace_tab(wb)

        wb.save(output_path)
        logger.info("Wrote study workbook: %s", output_path)

    def _create_summary_tab(self, wb: Workbook):
        ws = wb.create_sheet("Summary")

        ws['A1'] = "Feature Importance Study - Summary"
        ws['A1'].font = Font(size=14, bold=True)

        row = 3
        ws[f'A{row}'] = "CONFIGURATION"
        self._apply_section_style(ws[f'A{row}'])
        row += 1
        for label, value in self.summary.items():
            ws[f'A{row}'] = label
            ws[f'B{row}'] = self._cell_value(value)
            row += 1

        if self.importance is not None:
            row += 1
            ws[f'A{row}'] = "IMPORTANCE MAP"
            self._apply_section_style(ws[f'A{row}'])
            row += 1
            meta = self.importance.metadata()
            present = self.importance.values[~self.importance.missing]
            facts = [
                ("Layout", self.importance.layout),
                ("Shape", 'x'.join(str(d) for d in self.importance.shape)),
                ("Mode", meta['mode']),
                ("Condition", meta['condition']),
                ("Samples", meta['n']),
                ("Missing Entries", int(self.importance.missing.sum())),
            ]
            if present.size:
                facts.append(("Argmax", self._format_coordinate(self.importance.argmax())))
                facts.append(("Max Value", float(present.max())))
            for label, value in facts:
                ws[f'A{row}'] = label
                ws[f'B{row}'] = self._cell_value(value)
                row += 1

        if self.curves:
            row += 1
            ws[f'A{row}'] = "MORF AREA OVER CURVE"
            self._apply_section_style(ws[f'A{row}'])
            row += 1
            for curve in self.curves:
                if len(curve.steps) < 2:
                    continue
                label = curve.ordering if curve.seed is None else f"{curve.ordering} (seed {curve.seed})"
                ws[f'A{row}'] = label
                ws[f'B{row}'] = area_over_curve(curve)
                ws[f'B{row}'].number_format = '0.0000'
                row += 1

        ws.column_dimensions['A'].width = 30
        ws.column_dimensions['B'].width = 40

    def _create_importance_tab(self, wb: Workbook):
        ws = wb.create_sheet("Importance")
        importance = self.importance

        if importance.layout == GRID:
            # Heatmap: one cell per pixel with a colour scale
            d1, d2 = importance.shape
            for j in range(1, d2 + 1):
                self._apply_header_style(ws.cell(row=1, column=j + 1, value=j))
            for i in range(1, d1 + 1):
                self._apply_header_style(ws.cell(row=i + 1, column=1, value=i))
                for j in range(1, d2 + 1):
                    value = importance.values[i - 1, j - 1]
                    cell = ws.cell(row=i + 1, column=j + 1,
                                   value=None if np.isnan(value) else float(value))
                    cell.number_format = '0.000'
            cells = f"B2:{get_column_letter(d2 + 1)}{d1 + 1}"
            ws.conditional_formatting.add(cells, ColorScaleRule(
                start_type='min', start_color='FFFFFF', end_type='max', end_color='C00000'))
            for j in range(1, d2 + 2):
                ws.column_dimensions[get_column_letter(j)].width = 8
            return

        self._write_dataframe_to_sheet(ws, importance_frame(importance))

        # Per-position profile chart next to the table
        profile = importance.position_profile() if importance.layout == PO_MATRIX else importance
        col = 6
        self._apply_header_style(ws.cell(row=1, column=col, value='position'))
        self._apply_header_style(ws.cell(row=1, column=col + 1, value='profile'))
        for p, value in enumerate(profile.values, start=1):
            ws.cell(row=p + 1, column=col, value=p)
            ws.cell(row=p + 1, column=col + 1, value=None if np.isnan(value) else float(value))

        chart = LineChart()
        chart.title = "Importance by position"
        chart.x_axis.title = "Position"
        chart.y_axis.title = "Importance"
        last = len(profile.values) + 1
        chart.add_data(Reference(ws, min_col=col + 1, min_row=1, max_row=last), titles_from_data=True)
        chart.set_categories(Reference(ws, min_col=col, min_row=2, max_row=last))
        ws.add_chart(chart, f"{get_column_letter(col + 3)}2")

    def _create_morf_tab(self, wb: Workbook):
        ws = wb.create_sheet("MoRF")
        self._write_dataframe_to_sheet(ws, morf_frame(self.curves))

        # Side-by-side accuracy columns per curve for the chart
        col = len(self.curves[0].to_frame().columns) + 2
        longest = max(len(curve.steps) for curve in self.curves)
        self._apply_header_style(ws.cell(row=1, column=col, value='step'))
        for s in range(longest):
            ws.cell(row=s + 2, column=col, value=s)
        for offset, curve in enumerate(self.curves, start=1):
            title = RELEVANCE if curve.ordering == RELEVANCE else f"{RANDOM} {curve.seed}"
            self._apply_header_style(ws.cell(row=1, column=col + offset, value=title))
            for s, (_, acc) in enumerate(curve.steps):
                ws.cell(row=s + 2, column=col + offset, value=acc)

        chart = LineChart()
        chart.title = "Most relevant first perturbation"
        chart.x_axis.title = "Step"
        chart.y_axis.title = "Accuracy"
        chart.add_data(Reference(ws, min_col=col + 1, max_col=col + len(self.curves),
                                 min_row=1, max_row=longest + 1), titles_from_data=True)
        chart.set_categories(Reference(ws, min_col=col, min_row=2, max_row=longest + 1))
        ws.add_chart(chart, f"{get_column_letter(col + len(self.curves) + 2)}2")

    def _create_convergence_tab(self, wb: Workbook):
        ws = wb.create_sheet("Convergence")
        self._write_dataframe_to_sheet(ws, self.convergence)

        last = len(self.convergence) + 1
        columns = list(self.convergence.columns)
        chart = LineChart()
        chart.title = "Distance between consecutive maps"
        chart.x_axis.title = "Sample size"
        chart.y_axis.title = "Frobenius distance"
        distance_col = columns.index('frobenius_distance') + 1
        chart.add_data(Reference(ws, min_col=distance_col, min_row=1, max_row=last), titles_from_data=True)
        chart.set_categories(Reference(ws, min_col=columns.index('n') + 1, min_row=2, max_row=last))
        ws.add_chart(chart, f"{get_column_letter(len(columns) + 2)}2")

    def _create_audit_trace_tab(self, wb: Workbook):
        """Create Audit_Trace tab."""
        ws = wb.create_sheet("Audit_Trace")

        ws['A1'] = "Audit Trail and Assumptions Log"
        ws['A1'].font = Font(size=14, bold=True)

        row = 3
        ws[f'A{row}'] = "DEFAULTS APPLIED"
        self._apply_section_style(ws[f'A{row}'])
        row += 1

        if self.defaults_used:
            for default in self.defaults_used:
                ws[f'A{row}'] = default
                row += 1
        else:
            ws[f'A{row}'] = "No defaults applied - all settings provided"
            row += 1

        row += 1
        ws[f'A{row}'] = "WARNINGS"
        self._apply_section_style(ws[f'A{row}'])
        row += 1

        if self.warnings:
            for warning in self.warnings:
                ws[f'A{row}'] = warning
                row += 1
        else:
            ws[f'A{row}'] = "No warnings"
            row += 1

        ws.column_dimensions['A'].width = 80

    def _write_dataframe_to_sheet(self, ws, df: pd.DataFrame, start_row: int = 1):
        """Helper to write DataFrame to sheet with formatting."""
        for col_idx, col_name in enumerate(df.columns, start=1):
            cell = ws.cell(row=start_row, column=col_idx, value=col_name)
            self._apply_header_style(cell)

        for row_idx, row in enumerate(dataframe_to_rows(df, index=False, header=False), start=start_row + 1):
            for col_idx, value in enumerate(row, start=1):
                cell = ws.cell(row=row_idx, column=col_idx, value=self._cell_value(value))
                col_name = str(df.columns[col_idx - 1])
                if col_name in ('value', 'accuracy', 'frobenius_distance', 'map_norm'):
                    cell.number_format = '0.0000'
                elif col_name in ('seconds', 'previous_seconds'):
                    cell.number_format = '0.00'

        for column in ws.columns:
            width = max((len(str(cell.value)) for cell in column if cell.value is not None), default=8)
            ws.column_dimensions[column[0].column_letter].width = min(width + 2, 50)

    @staticmethod
    def _cell_value(value: Any) -> Any:
        if value is None or value is pd.NA:
            return None
        if isinstance(value, (np.integer, np.floating)):
            value = value.item()
        if isinstance(value, float) and np.isnan(value):
            return None
        if isinstance(value, (list, tuple)):
            return ', '.join(str(v) for v in value)
        return value

    @staticmethod
    def _format_coordinate(coord: tuple) -> str:
        return '(' + ', '.join(str(c) for c in coord) + ')'

    def _apply_header_style(self, cell):
        """Apply header style to cell."""
        cell.fill = self.header_fill
        cell.font = self.header_font
        cell.alignment = Alignment(horizontal='center', vertical='center')

    def _apply_section_style(self, cell):
        """Apply section header style to cell."""
        cell.fill = self.section_fill
        cell.font = self.section_font
