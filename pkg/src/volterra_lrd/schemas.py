"""Bundled JSON schemas for kernel documents and run configs."""
from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

import jsonschema

from .errors import ArgumentError


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    text = resources.files("volterra_lrd").joinpath("data", name).read_text()
    return json.loads(text)


def _validate(doc, name):
    try:
        jsonschema.validate(doc, load_schema(name))
    except jsonschema.ValidationError as exc:
        raise ArgumentError(f"{name}: {exc.message}") from exc


def validate_kernel_document(doc: dict) -> None:
    _validate(doc, "kernel.schema.json")


def validate_config_document(doc: dict) -> None:
    _validate(doc, "config.schema.json")
