# graphids/services/reports.py - Text, JSON and PDF renderings of run results
import json
from io import BytesIO
from typing import Dict, List, Mapping, Sequence

import pandas as pd
from reportlab.lib.colors import HexColor
from reportlab.lib.pagesizes import A4, landscape
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from .modelsel import CellResult, EvaluationReport, TrainingOutcome, select_best_cells

COMPARISON_BLOCKS = ("selection", "tuning", "robustness", "test")


def to_json(document: Mapping) -> str:
    return json.dumps(document, indent=2, sort_keys=True) + "\n"


def _header_lines(header: Mapping) -> List[str]:
    return [f"{key}: {header[key]}" for key in sorted(header)]


def training_report_text(outcome: TrainingOutcome, header: Mapping) -> str:
    sel, tun, rob = outcome.selection, outcome.tuning, outcome.robustness
    increment = tun.increment_percent
    lines = ["# Training report", *_header_lines(header), ""]

    lines += [
        "## Feature selection",
        f"features ({len(sel.names)}): {', '.join(sel.names)}",
        f"most significant: {sel.most_significant}",
        "F1 per step: " + ", ".join(f"{s:.6f}" for s in sel.step_scores),
        "",
        "## Hyperparameter tuning",
        f"F1 before: {tun.f1_before:.6f}",
        f"F1 after: {tun.f1_after:.6f}",
        f"increment: {'n/a' if increment is None else f'{increment:.4f}%'}",
        f"gamma: {tun.grid.gamma:g}",
        f"C: {tun.grid.c:g}",
        f"grid ({tun.grid.n_cells} cells):",
        tun.grid.table.to_string(index=False, float_format=lambda v: f"{v:.6g}"),
        "",
        "## Robustness",
        f"folds: {len(rob.scores)}",
        f"F1 mean: {rob.mean_f1:.6f}",
        f"F1 std: {rob.std_f1:.6f}",
        f"support vectors (mean): {rob.mean_support:.1f}",
        f"support vectors / training size: {rob.support_share:.4%}",
        "",
        "## Final model",
        f"training size: {outcome.n_train}",
        f"support vectors: {outcome.model.n_support}",
        f"iterations: {outcome.model.iterations} (converged: {outcome.model.converged})",
        f"max KKT violation: {outcome.kkt:.3e}",
    ]
    return "\n".join(lines) + "\n"


def evaluation_report_text(report: EvaluationReport, header: Mapping) -> str:
    conf = report.confusion
    lines = ["# Evaluation report", *_header_lines(header), ""]
    lines += [
        f"TP={conf.tp} FP={conf.fp} TN={conf.tn} FN={conf.fn}",
        f"F1 benign: {report.f1_benign:.6f}",
        f"F1 malicious: {report.f1_malicious:.6f}",
        f"F1 weighted avg: {report.weighted_f1:.6f}",
        f"FPR: {report.fpr:.6f}",
        f"FNR: {report.fnr:.6f}",
        f"FP errors: {conf.fp}",
        f"FN errors: {conf.fn}",
        f"support vectors: {report.n_support}",
        f"features: {', '.join(report.selected_features)}",
        f"gamma: {report.gamma:g}  C: {report.c:g}",
    ]
    if report.flags:
        lines.append(f"degenerate (reported as 0): {', '.join(report.flags)}")

    lines += ["", "## Attacks", fn_breakdown_frame(report).to_string(index=False)]
    return "\n".join(lines) + "\n"


def fn_breakdown_frame(report: EvaluationReport) -> pd.DataFrame:
    rows = [(name, c["detected"], c["missed"]) for name, c in sorted(report.per_attack.items())]
    return pd.DataFrame(rows, columns=["attack", "detected", "missed"])


def cell_document(cell: CellResult) -> Dict:
    doc = {"sigma": cell.sigma, "omega": cell.policy}
    if not cell.ok:
        doc["error"] = cell.error
        return doc

    training, test = cell.training.to_dict(), cell.evaluation
    doc["selection"] = {
        "most_significant": training["selection"]["most_significant"],
        "n_features": training["selection"]["n_features"],
        "features": training["selection"]["features"],
    }
    doc["tuning"] = {key: training["tuning"][key] for key in ("f1_before", "f1_after", "increment_percent",
                                                              "gamma", "C")}
    doc["robustness"] = {key: training["robustness"][key] for key in ("mean_f1", "std_f1",
                                                                      "mean_support_vectors", "support_share")}
    doc["test"] = {
        "weighted_f1": round(test.weighted_f1, 6),
        "fpr": round(test.fpr, 6),
        "fnr": round(test.fnr, 6),
        "fp_errors": test.confusion.fp,
        "fn_errors": test.confusion.fn,
        "support_vectors": test.n_support,
        "missed_attacks": test.false_negatives,
    }
    return doc


def comparison_document(cells: Sequence[CellResult], header: Mapping) -> Dict:
    """Matrix results in selection/tuning/robustness/test blocks with the chosen cells marked"""
    streaming = select_best_cells([c for c in cells if not c.single_snapshot])
    single = select_best_cells([c for c in cells if c.single_snapshot])
    return {
        **dict(header),
        "cells": [cell_document(cell) for cell in cells],
        "best": {
            "sigma<N": streaming[0].label if streaming else None,
            "sigma=N": single[0].label if single else None,
        },
        "failed": [cell.label for cell in cells if not cell.ok],
    }


def comparison_frame(document: Mapping) -> pd.DataFrame:
    """One row per metric, one column per cell"""
    columns = {}
    for cell in document["cells"]:
        name = f"s={cell['sigma']} w={cell['omega'][0]}"
        values = {}
        for block in COMPARISON_BLOCKS:
            for key, value in cell.get(block, {}).items():
                if isinstance(value, (list, dict)):
                    value = ", ".join(value) if isinstance(value, list) else len(value)
                values[f"{block}.{key}"] = value
        if "error" in cell:
            values["error"] = cell["error"]
        columns[name] = values

    frame = pd.DataFrame(columns)
    return frame.fillna("")


def comparison_text(document: Mapping) -> str:
    lines = ["# Comparison", *_header_lines({k: v for k, v in document.items()
                                              if k not in ("cells", "best", "failed")}), ""]
    lines.append(comparison_frame(document).to_string())
    lines.append("")
    for group, label in document["best"].items():
        lines.append(f"best {group}: {label or '-'}")
    if document["failed"]:
        lines.append(f"failed cells: {', '.join(document['failed'])}")
    return "\n".join(lines) + "\n"


def generate_comparison_pdf(document: Mapping) -> bytes:
    """Render the comparison document; invariant mode keeps reruns byte-identical"""
    buffer = BytesIO()
    doc = SimpleDocTemplate(buffer, pagesize=landscape(A4), rightMargin=30, leftMargin=30,
                            topMargin=30, bottomMargin=30, invariant=1,
                            title="Graph feature comparison", author="graph-ids")

    styles = getSampleStyleSheet()
    title_style = ParagraphStyle(
        "ComparisonTitle",
        parent=styles["Heading1"],
        fontSize=18,
        spaceAfter=12,
        textColor=HexColor("#1B7EFE"),
        fontName="Helvetica-Bold",
    )
    meta_style = ParagraphStyle(
        "Meta",
        parent=styles["Normal"],
        fontSize=8,
        textColor=HexColor("#6B7280"),
        fontName="Helvetica",
    )

    story = [Paragraph("Graph feature comparison", title_style)]
    for key in ("config_digest", "seed", "version"):
        if key in document:
            story.append(Paragraph(f"{key}: {document[key]}", meta_style))
    story.append(Spacer(1, 12))

    frame = comparison_frame(document)
    data = [[""] + list(frame.columns)]
    for metric, row in frame.iterrows():
        data.append([metric] + [str(v) for v in row.tolist()])

    table = Table(data, repeatRows=1)
    table.setStyle(TableStyle([
        ("FONTNAME", (0, 0), (-1, 0), "Helvetica-Bold"),
        ("FONTSIZE", (0, 0), (-1, -1), 7),
        ("BACKGROUND", (0, 0), (-1, 0), HexColor("#F3F4F6")),
        ("GRID", (0, 0), (-1, -1), 0.25, HexColor("#D1D5DB")),
        ("VALIGN", (0, 0), (-1, -1), "TOP"),
    ]))
    story.append(table)
    story.append(Spacer(1, 12))

    for group, label in document["best"].items():
        story.append(Paragraph(f"best {group}: {label or '-'}", meta_style))

    doc.build(story)
    pdf_content = buffer.getvalue()
    buffer.close()
    return pdf_content


__all__ = [
    "to_json",
    "training_report_text",
    "evaluation_report_text",
    "fn_breakdown_frame",
    "cell_document",
    "comparison_document",
    "comparison_frame",
    "comparison_text",
    "generate_comparison_pdf",
]
