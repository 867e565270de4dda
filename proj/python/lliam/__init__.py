# SPDX-License-Identifier: Apache-2.0
"""Python bindings for the lliam forecasting core."""

from ._lliam import (
    Model,
    Tokenizer,
    dataset_names,
    format_number,
    lora_scale,
    make_windows,
    missing_rate,
    mitigate_anomalies,
    parse_output,
    render_answer,
    render_prompt,
    rmse,
    rope_angles,
    smape,
)

__all__ = [
    "Model",
    "Tokenizer",
    "dataset_names",
    "format_number",
    "lora_scale",
    "make_windows",
    "missing_rate",
    "mitigate_anomalies",
    "parse_output",
    "render_answer",
    "render_prompt",
    "rmse",
    "rope_angles",
    "smape",
]
