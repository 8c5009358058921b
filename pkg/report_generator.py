"""
KONTRAKTOR v1.0 - Report Generator
==================================
Raport JSON rodziny oraz opcjonalny skoroszyt Excel z flopami,
deskryptorami LoG, układami pamięci i diagnostyką
"""

import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Dict, List

import pandas as pd
from openpyxl import Workbook
from openpyxl.styles import Alignment, Border, Font, NamedStyle, PatternFill, Side
from openpyxl.utils.dataframe import dataframe_to_rows

from config import APP_NAME, APP_VERSION
from utils import FileUtils

logger = logging.getLogger(__name__)

RATIO_CONVENTION = (
    "eqspp_ratio = box_flops / dense_flops; oba liczą tylko wywołania kontrakcji "
    "(log, product, indexsum) tego samego planu, box w pudełkach EQSPP, dense w pełnych rozmiarach"
)


def build_report(outcome) -> Dict:
    """Słownik raportu: rodzina, układy, kernele, diagnostyka"""
    kernels = []
    for result in outcome.results:
        if result.artifact is not None:
            entry = result.artifact.summary()
        else:
            entry = {'kernel': result.kernel,
                     'diagnostics': [d.to_dict() for d in result.diagnostics]}
        entry['success'] = result.success
        kernels.append(entry)
    return {
        'generator': f"{APP_NAME} {APP_VERSION}",
        'family': outcome.family,
        'precision': outcome.precision,
        'alignment': outcome.alignment,
        'ratio_convention': RATIO_CONVENTION,
        'layouts': {name: layout.to_dict() for name, layout in sorted(outcome.layouts.items())},
        'kernels': kernels,
        'diagnostics': [d.to_dict() for d in outcome.diagnostics],
    }


def write_json_report(outcome, out_dir: Path) -> Path:
    text = json.dumps(build_report(outcome), indent=2, ensure_ascii=False)
    path = FileUtils.write_text(Path(out_dir) / f"{outcome.family}_report.json", text + '\n')
    logger.info(f"💾 Raport JSON: {path}")
    return path


class FlopReportGenerator:
    """Skoroszyt z podsumowaniem flopów rodziny kerneli"""

    COLORS = {
        'header_blue': 'FF0070C0',
        'light_blue': 'FFDBEEF3',
        'error_red': 'FFFFCCCC',
        'warning_yellow': 'FFFFFFCC',
        'success_green': 'FFCCFFCC',
    }

    def __init__(self, filename: str = None):
        self.filename = filename or f"Raport_Flopow_{datetime.now().strftime('%Y%m%d_%H%M%S')}.xlsx"
        self.wb = Workbook()
        self.setup_styles()

    def setup_styles(self):
        header_style = NamedStyle(name="header_style")
        header_style.font = Font(bold=True, color="FFFFFFFF", size=11)
        header_style.fill = PatternFill(start_color=self.COLORS['header_blue'],
                                        end_color=self.COLORS['header_blue'], fill_type="solid")
        header_style.alignment = Alignment(horizontal="center", vertical="center", wrap_text=True)
        header_style.border = Border(left=Side(style='thin'), right=Side(style='thin'),
                                     top=Side(style='thin'), bottom=Side(style='medium'))
        self.wb.add_named_style(header_style)

        total_style = NamedStyle(name="total_style")
        total_style.font = Font(bold=True, size=11)
        total_style.fill = PatternFill(start_color=self.COLORS['light_blue'],
                                       end_color=self.COLORS['light_blue'], fill_type="solid")
        total_style.border = Border(top=Side(style='double'), bottom=Side(style='double'))
        self.wb.add_named_style(total_style)

        ratio_style = NamedStyle(name="ratio_style")
        ratio_style.number_format = '0.000'
        ratio_style.alignment = Alignment(horizontal="right")
        self.wb.add_named_style(ratio_style)

    def generate(self, outcomes: List, filename: str = None) -> str:
        """Arkusze: podsumowanie, deskryptory, układy, diagnostyka"""
        if "Sheet" in self.wb.sheetnames:
            self.wb.remove(self.wb["Sheet"])
        self._create_summary_sheet(outcomes)
        self._create_descriptor_sheet(outcomes)
        self._create_layout_sheet(outcomes)
        self._create_diagnostics_sheet(outcomes)
        self.wb.active = self.wb['Podsumowanie']
        return self.save(filename)

    @staticmethod
    def _style_header(ws):
        for cell in ws[1]:
            cell.style = "header_style"
        ws.freeze_panes = 'A2'

    def _create_summary_sheet(self, outcomes: List):
        ws = self.wb.create_sheet("Podsumowanie")
        rows = []
        for outcome in outcomes:
            for artifact in outcome.artifacts:
                flops = artifact.flops
                rows.append({
                    'Rodzina': outcome.family,
                    'Kernel': artifact.name,
                    'Flopy niezerowe': flops.nonzero,
                    'Flopy sprzętowe': flops.hardware,
                    'Flopy pudełkowe': flops.box,
                    'Flopy gęste': flops.dense,
                    'Stosunek EQSPP': flops.eqspp_ratio,
                    'Akcje': len(artifact.calls),
                })
        df = pd.DataFrame(rows, columns=['Rodzina', 'Kernel', 'Flopy niezerowe', 'Flopy sprzętowe',
                                         'Flopy pudełkowe', 'Flopy gęste', 'Stosunek EQSPP', 'Akcje'])
        for row in dataframe_to_rows(df, index=False, header=True):
            ws.append(row)
        self._style_header(ws)
        for row in ws.iter_rows(min_row=2, max_row=ws.max_row, min_col=7, max_col=7):
            for cell in row:
                cell.style = "ratio_style"
        if rows:
            ws.append([])
            total_row = ws.max_row + 1
            last = total_row - 2
            ws.append(["SUMA:", "", f"=SUM(C2:C{last})", f"=SUM(D2:D{last})",
                       f"=SUM(E2:E{last})", f"=SUM(F2:F{last})"])
            for col in range(1, 7):
                ws.cell(row=total_row, column=col).style = "total_style"
        for col, width in {'A': 22, 'B': 22, 'C': 16, 'D': 16, 'E': 16, 'F': 16, 'G': 14, 'H': 8}.items():
            ws.column_dimensions[col].width = width

    def _create_descriptor_sheet(self, outcomes: List):
        ws = self.wb.create_sheet("Deskryptory")
        ws.append(["Rodzina", "Kernel", "M", "N", "K", "Wsad", "Trans A", "Trans B", "CSC",
                   "Koszt", "Zapis"])
        for outcome in outcomes:
            for artifact in outcome.artifacts:
                for call in artifact.calls:
                    if call.gemm is None:
                        continue
                    d = call.action.rhs.descriptor
                    ws.append([outcome.family, artifact.name, call.gemm.m, call.gemm.n, call.gemm.k,
                               ''.join(d.batched), d.trans_a, d.trans_b, d.csc_b, str(d.cost), d.notation()])
        self._style_header(ws)
        ws.column_dimensions['K'].width = 40

    def _create_layout_sheet(self, outcomes: List):
        ws = self.wb.create_sheet("Układy")
        ws.append(["Rodzina", "Tensor", "Wariant", "Kształt", "Pudełko", "Elementy"])
        for outcome in outcomes:
            for name, layout in sorted(outcome.layouts.items()):
                box = ' x '.join(f"[{s},{e})" for s, e in layout.intervals)
                ws.append([outcome.family, name, layout.variant, str(layout.shape), box, layout.size])
        self._style_header(ws)
        ws.column_dimensions['E'].width = 30

    def _create_diagnostics_sheet(self, outcomes: List):
        ws = self.wb.create_sheet("Diagnostyka")
        ws.append(["Rodzina", "Poziom", "Kod", "Kernel", "Komunikat"])
        for outcome in outcomes:
            for diagnostic in outcome.all_diagnostics:
                ws.append([outcome.family, diagnostic.severity, diagnostic.code,
                           diagnostic.kernel or '', diagnostic.message])
                color = 'error_red' if diagnostic.severity == 'error' else 'warning_yellow'
                cell = ws.cell(row=ws.max_row, column=2)
                cell.fill = PatternFill(start_color=self.COLORS[color], end_color=self.COLORS[color],
                                        fill_type="solid")
        self._style_header(ws)
        ws.column_dimensions['E'].width = 60

    def save(self, filename: str = None) -> str:
        save_path = filename or self.filename
        self.wb.save(save_path)
        logger.info(f"💾 Raport zapisany: {save_path}")
        return save_path


def write_reports(outcome, out_dir: Path, json_report: bool = True, excel_report: bool = False) -> List[Path]:
    out_dir = Path(out_dir)
    paths = []
    if json_report:
        paths.append(write_json_report(outcome, out_dir))
    if excel_report:
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / f"{outcome.family}_report.xlsx"
        FlopReportGenerator().generate([outcome], str(path))
        paths.append(path)
    return paths
