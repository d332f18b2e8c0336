"""Audit orchestration, JSON reports and SVG figures."""
from .audit import (STAGES, AuditConfig, AuditError, AuditReport, CounterfactualConfig, EffectsConfig,
                    ShapleyConfig, audit_frames, dumps, load_report, run_audit, schema_path)
from .render import render_effects, render_force, render_importance, render_waterfall, waterfall_terms
from .svg import Canvas

__all__ = [
    "STAGES", "AuditConfig", "AuditError", "AuditReport", "CounterfactualConfig", "EffectsConfig",
    "ShapleyConfig", "audit_frames", "dumps", "load_report", "run_audit", "schema_path",
    "render_effects", "render_force", "render_importance", "render_waterfall", "waterfall_terms", "Canvas",
]
