"""PDF summary of a replication report bundle."""

import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Sequence

import pandas as pd
from reportlab.lib import colors
from reportlab.lib.pagesizes import landscape, letter
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.lib.units import inch
from reportlab.platypus import PageBreak, Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from .config import Config
from .metrics import SHORT_NAMES
from .stats import TRAIT_FIELDS, CorrelationResult


class PDFGenerator:
    """Renders the topology, null-model and correlation tables into one PDF."""

    def __init__(self, config: Config, output_dir: str = "output"):
        """
        Initialize PDF generator.

        Args:
            config: Configuration object
            output_dir: Directory to save the PDF file
        """
        self.config = config
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.decimals = int(config.get("report.decimal_places", 3))
        self.styles = getSampleStyleSheet()
        self.logger = logging.getLogger(__name__)

        self._create_custom_styles()

    def _create_custom_styles(self):
        """Create custom paragraph styles."""
        self.styles.add(
            ParagraphStyle(
                name="CustomTitle",
                parent=self.styles["Title"],
                fontSize=18,
                textColor=colors.darkblue,
                spaceAfter=20,
            )
        )

        self.styles.add(
            ParagraphStyle(
                name="SectionHeader",
                parent=self.styles["Heading2"],
                fontSize=14,
                textColor=colors.darkgreen,
                spaceBefore=15,
                spaceAfter=10,
            )
        )

    def generate_report(self, data: Dict[str, Any], filename: str = "report.pdf") -> str:
        """
        Generate the replication report PDF.

        Args:
            data: Report data with ``topology``, ``null_model``, ``correlations``
                and optional ``dining_rates`` / ``trait_summary`` entries

        Returns:
            Path to the generated PDF file
        """
        filepath = self.output_dir / filename

        # invariant output keeps reruns byte-identical
        doc = SimpleDocTemplate(
            str(filepath),
            pagesize=landscape(letter),
            topMargin=0.4 * inch,
            bottomMargin=0.4 * inch,
            leftMargin=0.4 * inch,
            rightMargin=0.4 * inch,
            invariant=1,
        )

        content = [Paragraph(self.config.get("report.title", "Report"), self.styles["CustomTitle"])]

        topology = data.get("topology")
        if topology is not None and len(topology):
            content.append(Paragraph("Weekly network topology", self.styles["SectionHeader"]))
            content.append(self._frame_table(topology))

        null_frame = data.get("null_model")
        if null_frame is not None and len(null_frame):
            content.append(Paragraph("Clustering vs. degree-preserving null model", self.styles["SectionHeader"]))
            content.append(self._frame_table(null_frame))

        rates = data.get("dining_rates")
        if rates is not None and len(rates):
            content.append(Paragraph("Dining activity per student per week", self.styles["SectionHeader"]))
            content.append(self._frame_table(rates))

        correlations = data.get("correlations") or []
        if correlations:
            content.append(PageBreak())
            content.append(
                Paragraph("Centrality vs. flourishing (Spearman)", self.styles["SectionHeader"])
            )
            content.append(self._correlation_table(correlations))
            content.append(Spacer(1, 8))
            content.append(
                Paragraph(
                    "Significance levels: * P &lt; 0.1, ** P &lt; 0.05, *** P &lt; 0.01",
                    self.styles["Normal"],
                )
            )

        summary = data.get("trait_summary")
        if summary is not None and len(summary):
            content.append(Paragraph("Flourishing scores", self.styles["SectionHeader"]))
            content.append(self._frame_table(summary.reset_index().rename(columns={"index": "field"})))

        doc.build(content)
        self.logger.info(f"PDF report saved: {filepath}")
        return str(filepath)

    def _format(self, value: Any) -> str:
        if isinstance(value, float):
            if math.isnan(value):
                return "n/a"
            return f"{value:.{self.decimals}f}"
        return str(value)

    def _frame_table(self, frame: pd.DataFrame) -> Table:
        """Grid table of a DataFrame with a bold header row."""
        rows = [[str(c) for c in frame.columns]]
        rows += [[self._format(v) for v in record] for record in frame.itertuples(index=False)]
        table = Table(rows, repeatRows=1)
        table.setStyle(
            TableStyle(
                [
                    ("BACKGROUND", (0, 0), (-1, 0), colors.lightgrey),
                    ("FONTNAME", (0, 0), (-1, 0), "Helvetica-Bold"),
                    ("FONTSIZE", (0, 0), (-1, -1), 8),
                    ("ALIGN", (1, 1), (-1, -1), "CENTER"),
                    ("GRID", (0, 0), (-1, -1), 0.5, colors.black),
                    ("VALIGN", (0, 0), (-1, -1), "MIDDLE"),
                ]
            )
        )
        return table

    def _correlation_table(self, results: Sequence[CorrelationResult]) -> Table:
        """Week rows, F1/F2/dF columns grouped by centrality kind."""
        kinds = list(dict.fromkeys(r.kind for r in results))
        weeks = sorted({r.week for r in results})
        cells = {(r.week, r.kind, r.trait): r for r in results}

        title_row: List[str] = ["W"]
        field_row: List[str] = [""]
        for kind in kinds:
            title_row += [SHORT_NAMES[kind]] + [""] * (len(TRAIT_FIELDS) - 1)
            field_row += list(TRAIT_FIELDS)

        rows = [title_row, field_row]
        for week in weeks:
            row = [str(week)]
            for kind in kinds:
                for field in TRAIT_FIELDS:
                    cell = cells.get((week, kind, field))
                    if cell is None or math.isnan(cell.rho):
                        row.append("n/a")
                    else:
                        row.append(f"{cell.rho:.{self.decimals}f}{cell.stars}")
            rows.append(row)

        style = [
            ("FONTSIZE", (0, 0), (-1, -1), 8),
            ("FONTNAME", (0, 0), (-1, 1), "Helvetica-Bold"),
            ("BACKGROUND", (0, 0), (-1, 0), colors.HexColor("#FFFF99")),
            ("ALIGN", (0, 0), (-1, -1), "CENTER"),
            ("GRID", (0, 0), (-1, -1), 0.5, colors.black),
        ]
        for index in range(len(kinds)):
            first = 1 + index * len(TRAIT_FIELDS)
            style.append(("SPAN", (first, 0), (first + len(TRAIT_FIELDS) - 1, 0)))

        table = Table(rows, repeatRows=2)
        table.setStyle(TableStyle(style))
        return table
