from __future__ import annotations

import csv
import json
import logging
import math
from pathlib import Path
from typing import TYPE_CHECKING

from snap_prep.utils.models import ReportModel

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

    from snap_prep.utils import config
    from snap_prep.utils.wigner_tomo import WignerGrid

logger = logging.getLogger(__name__)


class SupportUtils:
    """Run-wide state of one CLI invocation and the writers for its artifacts."""

    def __init__(self) -> None:
        self._config_obj: config.RunConfig | None = None
        self._output_dir: Path | None = None
        self.written: list[Path] = []

    @property
    def config_obj(self) -> config.RunConfig:
        if self._config_obj is None:
            raise ValueError("Config object is not set")
        return self._config_obj

    @config_obj.setter
    def config_obj(self, value: config.RunConfig) -> None:
        self._config_obj = value

    @property
    def output_dir(self) -> Path:
        if self._output_dir is None:
            raise ValueError("Output directory is not set")
        return self._output_dir

    @output_dir.setter
    def output_dir(self, value: Path) -> None:
        value.mkdir(parents=True, exist_ok=True)
        self._output_dir = value

    def _record(self, path: Path) -> Path:
        self.written.append(path)
        logger.info("Wrote %s", path)
        return path

    def write_report(self, name: str, report: ReportModel) -> Path:
        """Write ``<name>.json`` and its JSON Schema ``<name>.schema.json``."""
        path = self.output_dir / f"{name}.json"
        path.write_text(report.model_dump_json(indent=2))
        schema = self.output_dir / f"{name}.schema.json"
        schema.write_text(json.dumps(type(report).model_json_schema(mode="serialization"), indent=2))
        return self._record(path)

    def write_table(self, name: str, header: Sequence[str], rows: Iterable[Sequence[object]]) -> Path:
        path = self.output_dir / f"{name}.csv"
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            writer.writerows(rows)
        return self._record(path)

    def write_wigner(self, name: str, grid: WignerGrid) -> Path:
        path = self.output_dir / f"{name}.csv"
        grid.to_csv(path)
        if self.config_obj.render:
            render_wigner(grid, path.with_suffix(".png"))
        return self._record(path)

    def output_path(self, filename: str) -> Path:
        return self._record(self.output_dir / filename)


def render_wigner(grid: WignerGrid, path: Path) -> None:
    """PNG heatmap of a square Wigner grid; needs the ``plot`` extra."""
    try:
        import matplotlib as mpl  # noqa: PLC0415

        mpl.use("Agg")
        import matplotlib.pyplot as plt  # noqa: PLC0415
    except ImportError:
        logger.warning("matplotlib is not installed; skipping %s", path)
        return
    extent = grid.extent or float(max(abs(grid.points.real).max(), abs(grid.points.imag).max()))
    bound = 2.0 / math.pi
    fig, ax = plt.subplots(figsize=(4, 4))
    image = ax.imshow(
        grid.image(),
        origin="lower",
        extent=(-extent, extent, -extent, extent),
        cmap="RdBu_r",
        vmin=-bound,
        vmax=bound,
    )
    ax.set_xlabel("Re α")
    ax.set_ylabel("Im α")
    fig.colorbar(image, ax=ax, label="W(α)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    logger.info("Rendered %s", path)
