# handlers/common.py
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, Literal, Optional, Sequence

import click
from pydantic import BaseModel, ConfigDict, field_validator

from services.pipeline import TreatmentConfig
from services.topics_model import TopicsParams
from utils.formatter import emit, render, render_json
from utils.taxonomies import taxonomy_size

OutputFormat = Literal["csv", "json", "table"]


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    command: str
    inputs: Dict[str, Path] = {}
    params: Optional[TopicsParams] = None
    treatment: Optional[TreatmentConfig] = None
    seed: int = 0
    out: Optional[Path] = None
    fmt: OutputFormat = "csv"

    @field_validator("inputs")
    @classmethod
    def _inputs_exist(cls, value: Dict[str, Path]) -> Dict[str, Path]:
        for name, path in value.items():
            if not Path(path).is_file():
                raise ValueError(f"{name} file not found: {path}")
        return value


def parse_taxonomy_size(ctx: click.Context, param: click.Parameter, value: Any) -> Any:
    """Accepts a taxonomy name/alias or a plain size for --m."""
    if value is None:
        return None
    if isinstance(value, (tuple, list)):
        return tuple(parse_taxonomy_size(ctx, param, v) for v in value)
    size = taxonomy_size(str(value))
    if size is None:
        raise click.BadParameter(f"unknown taxonomy {value!r}")
    return size


def seed_option(f: Callable) -> Callable:
    return click.option("--seed", type=int, default=0, show_default=True, help="Random seed.")(f)


def output_options(default_format: str = "csv") -> Callable[[Callable], Callable]:
    def decorate(f: Callable) -> Callable:
        f = click.option(
            "--out", type=click.Path(path_type=Path), default=None,
            help="Write to this path instead of stdout.",
        )(f)
        f = click.option(
            "--format", "fmt", type=click.Choice(["csv", "json", "table"]),
            default=default_format, show_default=True,
        )(f)
        return f
    return decorate


def write_rows(rows: Iterable[Any], fmt: str, out: Optional[Path], columns: Optional[Sequence[str]] = None) -> None:
    text = render(rows, fmt, columns)
    written = emit(text, out)
    if written is None:
        click.echo(text.rstrip("\n"))
    else:
        click.echo(f"Wrote {written}", err=True)


def write_document(payload: Any, out: Optional[Path]) -> None:
    text = render_json(payload)
    written = emit(text, out)
    if written is None:
        click.echo(text)
    else:
        click.echo(f"Wrote {written}", err=True)
