"""Stage orchestration: extract -> art -> merge -> render -> compose -> PDF.

Every command runs in one thread of control; only tile rendering fans out
over ``jobs`` worker threads, and results are consumed in tile order so the
thread count never changes a byte of output.
"""

from __future__ import annotations

import contextlib
import json
import logging
import os
import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .compose import (WIDE, Accumulator, Manifest, PngSink, color_lut, emit_pdf, sort_stack,
                      stitch)
from .config import ConfigError, PipelineConfig, parse_layer, require, um_to_dbu
from .gdsii import (GdsError, GdsLibrary, LayerKey, extract_layer, merge_libraries,
                    read_gds, write_gds)
from .geom import PolygonSet, bounding_box, build_occupancy, flatten_layers
from .meerkat import (ArtError, ArtPolyomino, check_drc, export_art_gds, export_svg,
                      generate_art, image_to_bw, load_logo, map_logo_to_grid)
from .png import png_info
from .raster import (RasterError, RenderFrame, TileGrid, bucket_layer, default_jobs,
                     dump_tile, load_tile, parallel_map, plan_tiles, rasterize_tile)

log = logging.getLogger("artistic")

TILE_INDEX = "render.json"


class StageError(Exception):
    """A module error tagged with the pipeline stage that raised it."""

    def __init__(self, stage: str, error: BaseException):
        super().__init__(f"{stage}: {error}")
        self.stage, self.error = stage, error


class InputError(Exception):
    pass


class ArtifactError(Exception):
    pass


@dataclass
class RunReport:
    command: str
    timings: list[tuple[str, float]] = field(default_factory=list)
    wall: float = 0.0
    artifacts: list[str] = field(default_factory=list)


class _Clock:
    """Back-to-back stage timer: stage durations always sum to the wall time."""

    def __init__(self, report: RunReport):
        self.report = report
        self.t0 = self.mark = time.perf_counter()

    @contextlib.contextmanager
    def stage(self, name: str) -> Iterator[None]:
        log.debug("stage %s started", name)
        try:
            yield
        except StageError:
            raise
        except Exception as e:
            raise StageError(name, e) from e
        finally:
            now = time.perf_counter()
            dt, self.mark = now - self.mark, now
            self.report.timings.append((name, dt))
            log.info("stage %-10s %9.3f s", name, dt)

    def finish(self) -> None:
        self.report.wall = self.mark - self.t0
        log.info("total      %9.3f s", self.report.wall)


@contextlib.contextmanager
def _atomic(path: str) -> Iterator[str]:
    """Write to ``path.partial`` and rename into place only on success."""
    tmp = path + ".partial"
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


class Run:
    """State shared between the stages of one command."""

    def __init__(self, cfg: PipelineConfig, command: str, jobs: Optional[int] = None):
        self.cfg = cfg
        self.jobs = jobs or default_jobs()
        self.report = RunReport(command)
        self.clock = _Clock(self.report)
        self.lib: Optional[GdsLibrary] = None
        self.shapes: Optional[list[ArtPolyomino]] = None
        self.art_lib: Optional[GdsLibrary] = None
        self.merged: Optional[GdsLibrary] = None

    def stage(self, name: str):
        return self.clock.stage(name)

    def produced(self, path: str) -> None:
        self.report.artifacts.append(path)

    # -- stages --------------------------------------------------------------

    def load(self, path: Optional[str] = None) -> GdsLibrary:
        path = path or self.cfg.resolve(self.cfg.gds_in)
        with self.stage("load"):
            if not os.path.exists(path):
                raise InputError(f"input GDSII {path} does not exist")
            lib = read_gds(path)
            if self.cfg.top_cell not in lib:
                raise InputError(f"top cell {self.cfg.top_cell!r} not in {path}")
        return lib

    def extract(self) -> None:
        out = self.cfg.output("metal_gds_out")
        with self.stage("extract"):
            metal = extract_layer(self.lib, self.cfg.top_metal_key)
            if out:
                self._write_gds(metal, out)

    def art(self) -> None:
        logo = self.cfg.logo
        units = self.lib.units
        key = self.cfg.top_metal_key
        with self.stage("occupancy"):
            rules = logo.rules.to_rules(units)
            placement = tuple(um_to_dbu(v, units) for v in logo.placement)
            path = self.cfg.resolve(logo.path)
            if not os.path.exists(path):
                raise InputError(f"logo {path} does not exist")
            grid = map_logo_to_grid(image_to_bw(load_logo(path), logo.threshold), placement, rules)
            metal = flatten_layers(self.lib, self.cfg.top_cell, [key])[key]
            occ = build_occupancy(metal, grid.origin, grid.pitch, grid.cols, grid.rows,
                                  rules.keepout)
        with self.stage("art"):
            self.shapes = generate_art(grid, occ, rules, key)
            log.info("art: %d shapes on a %dx%d grid", len(self.shapes), grid.cols, grid.rows)
            if logo.verify:
                report = check_drc(self.shapes, occ, rules)
                if not report.clean:
                    first = report.violations[0]
                    raise ArtError(f"{report.count} DRC violation(s), first: {first.detail}")
            self.art_lib = export_art_gds(self.shapes, key, units)
            svg = self.cfg.output("svg_out")
            if svg:
                with _atomic(svg) as tmp, open(tmp, "w", encoding="utf-8") as fh:
                    fh.write(export_svg(self.shapes, units, placement))
                self.produced(svg)
            art_gds = self.cfg.output("art_gds_out")
            if art_gds:
                self._write_gds(self.art_lib, art_gds)

    def merge(self) -> None:
        with self.stage("merge"):
            self.merged = merge_libraries(self.lib, self.art_lib, self.cfg.top_cell)
            out = self.cfg.output("gds_out")
            if out:
                self._write_gds(self.merged, out)

    def _write_gds(self, lib: GdsLibrary, path: str) -> None:
        with _atomic(path) as tmp:
            write_gds(lib, tmp)
        self.produced(path)

    # -- rendering -------------------------------------------------------------

    def prepare_render(self, lib: GdsLibrary):
        fc = self.cfg.frame
        units = lib.units
        styles = sort_stack(self.cfg.styles())
        keys = sorted({s.key for s in styles})
        with self.stage("flatten"):
            sets = flatten_layers(lib, self.cfg.top_cell, None if fc.window == "auto" else keys)
            if fc.window == "auto":
                window = bounding_box(sets.values())
                if window is None:
                    raise RasterError("top cell has no geometry; set an explicit frame window")
            else:
                window = tuple(um_to_dbu(v, units) for v in fc.window)
            for k in keys:
                if k not in sets:
                    sets[k] = PolygonSet.from_polygons(k, [])
            frame = RenderFrame.for_window(window, fc.nm_per_px, fc.supersample, fc.max_tile_px,
                                           units.nm_per_dbu, multiple=fc.downscale)
            grid = plan_tiles(frame)
            log.info("render: %dx%d px at %g nm/px, %d tile(s) of %dx%d", frame.out_width_px,
                     frame.out_height_px, fc.nm_per_px, len(grid), grid.tile_w, grid.tile_h)
        with self.stage("bucket"):
            buckets = {k: bucket_layer(sets[k], frame, grid) for k in keys}
        return styles, sets, frame, grid, buckets

    def _coverage(self, sets, frame, grid, buckets, key, col, row):
        return rasterize_tile(sets[key], key, frame, grid, col, row, buckets[key].bucket(col, row))

    def _final_grid(self, grid: TileGrid) -> TileGrid:
        f = self.cfg.frame.downscale
        return TileGrid(grid.tile_w // f, grid.tile_h // f, grid.cols, grid.rows,
                        grid.width // f, grid.height // f)

    def _sink(self, grid: TileGrid) -> PngSink:
        fc = self.cfg.frame
        png = self.cfg.output("png_out")
        os.makedirs(os.path.dirname(os.path.abspath(png)), exist_ok=True)
        fg = self._final_grid(grid)
        return PngSink(png, fg.width, fg.height, 3, fc.part_max_px, fc.dpi, fc.png_level)

    def _stitch(self, tiles, grid: TileGrid) -> Manifest:
        sink = self._sink(grid)
        try:
            manifest = stitch(tiles, self._final_grid(grid), sink)
        except BaseException:
            for fn in sink.files:
                if os.path.exists(fn):
                    os.remove(fn)
            raise
        self.report.artifacts.extend(sink.files)
        return manifest

    def render_compose(self, lib: GdsLibrary, spill: Optional[str] = None) -> Manifest:
        """Fused render: each worker rasterizes and composites a whole tile."""
        styles, sets, frame, grid, buckets = self.prepare_render(lib)
        luts = [color_lut(s, WIDE) for s in styles]
        bg, factor = self.cfg.background_rgb, self.cfg.frame.downscale
        if spill:
            os.makedirs(spill, exist_ok=True)

        def tile(t):
            col, row = t
            _, _, w, h = grid.tile_rect(col, row)
            acc = Accumulator(col, row, w, h, bg)
            for style, lut in zip(styles, luts):
                cov = self._coverage(sets, frame, grid, buckets, style.key, col, row)
                if spill:
                    dump_tile(cov, style.key, spill)
                acc.paint(cov, lut)
            return acc.finish(factor)

        with self.stage("render"):
            manifest = self._stitch(parallel_map(tile, grid.tiles(), self.jobs), grid)
            if spill:
                _write_index(spill, grid, styles)
        return manifest

    def render_tiles(self, lib: GdsLibrary, spill: str) -> None:
        styles, sets, frame, grid, buckets = self.prepare_render(lib)
        keys = sorted({s.key for s in styles})
        os.makedirs(spill, exist_ok=True)

        def tile(t):
            for k in keys:
                dump_tile(self._coverage(sets, frame, grid, buckets, k, *t), k, spill)

        with self.stage("render"):
            for _ in parallel_map(tile, grid.tiles(), self.jobs):
                pass
            _write_index(spill, grid, styles)
        self.produced(os.path.join(spill, TILE_INDEX))

    def compose_tiles(self, spill: str) -> Manifest:
        styles = sort_stack(self.cfg.styles())
        luts = [color_lut(s, WIDE) for s in styles]
        bg, factor = self.cfg.background_rgb, self.cfg.frame.downscale
        with self.stage("compose"):
            grid, have = _read_index(spill)
            missing = sorted({str(s.key) for s in styles} - have)
            if missing:
                raise InputError(f"no coverage tiles for layer(s) {', '.join(missing)} in {spill}")

            def tile(t):
                col, row = t
                _, _, w, h = grid.tile_rect(col, row)
                acc = Accumulator(col, row, w, h, bg)
                for style, lut in zip(styles, luts):
                    acc.paint(load_tile(style.key, col, row, spill), lut)
                return acc.finish(factor)

            if grid.width % factor or grid.height % factor:
                raise RasterError(f"rendered {grid.width}x{grid.height} px is not divisible by "
                                  f"downscale {factor}")
            return self._stitch(parallel_map(tile, grid.tiles(), self.jobs), grid)

    def pdf(self, manifest: Manifest) -> None:
        out = self.cfg.output("pdf_out")
        if not out:
            return
        with self.stage("pdf"):
            base = os.path.dirname(os.path.abspath(self.cfg.output("png_out")))
            with _atomic(out) as tmp:
                emit_pdf(manifest, tmp, self.cfg.frame.dpi, base)
            self.produced(out)

    def validate(self) -> None:
        with self.stage("validate"):
            for path in self.report.artifacts:
                validate_artifact(path)


def _write_index(spill: str, grid: TileGrid, styles) -> None:
    index = {"width": grid.width, "height": grid.height, "tile_w": grid.tile_w,
             "tile_h": grid.tile_h, "cols": grid.cols, "rows": grid.rows,
             "layers": sorted({str(s.key) for s in styles})}
    with _atomic(os.path.join(spill, TILE_INDEX)) as tmp, open(tmp, "w") as fh:
        json.dump(index, fh, indent=2, sort_keys=True)


def _read_index(spill: str) -> tuple[TileGrid, set[str]]:
    path = os.path.join(spill, TILE_INDEX)
    if not os.path.exists(path):
        raise InputError(f"{path} not found; run the render command first")
    with open(path) as fh:
        d = json.load(fh)
    grid = TileGrid(d["tile_w"], d["tile_h"], d["cols"], d["rows"], d["width"], d["height"])
    return grid, {str(parse_layer(k)) for k in d["layers"]}


def validate_artifact(path: str) -> None:
    """Cheap structural check of a produced file."""
    if not os.path.isfile(path) or os.path.getsize(path) == 0:
        raise ArtifactError(f"{path} missing or empty")
    ext = os.path.splitext(path)[1].lower()
    try:
        if ext == ".gds":
            read_gds(path)
        elif ext == ".png":
            png_info(path)
        elif ext == ".svg":
            ET.parse(path)
        elif ext == ".pdf":
            with open(path, "rb") as fh:
                head = fh.read(8)
                fh.seek(-6, os.SEEK_END)
                tail = fh.read()
            if not head.startswith(b"%PDF-") or b"%%EOF" not in tail:
                raise ValueError("not a complete PDF file")
        elif ext == ".json":
            with open(path) as fh:
                json.load(fh)
    except (ValueError, GdsError, ET.ParseError) as e:
        raise ArtifactError(f"{path}: {e}") from e


# -- commands ------------------------------------------------------------------


def _spill_dir(cfg: PipelineConfig) -> str:
    d = cfg.output("tiles_dir") or os.environ.get("ARTISTIC_TMPDIR")
    if not d:
        raise ConfigError("no tile directory: set outputs.tiles_dir or ARTISTIC_TMPDIR")
    return d


def _render_source(run: Run) -> GdsLibrary:
    """The merged library if art is configured, otherwise the input."""
    if run.cfg.logo is None:
        return run.load()
    out = run.cfg.output("gds_out")
    if not out:
        raise ConfigError("rendering with a logo reads the merged 'outputs.gds_out'")
    return run.load(out)


def cmd_extract(cfg: PipelineConfig, jobs: Optional[int] = None) -> RunReport:
    require(cfg, "extract")
    run = Run(cfg, "extract", jobs)
    run.lib = run.load()
    run.extract()
    return _finish(run)


def cmd_art(cfg: PipelineConfig, jobs: Optional[int] = None) -> RunReport:
    require(cfg, "art")
    run = Run(cfg, "art", jobs)
    run.lib = run.load()
    run.art()
    return _finish(run)


def cmd_merge(cfg: PipelineConfig, jobs: Optional[int] = None) -> RunReport:
    require(cfg, "merge")
    run = Run(cfg, "merge", jobs)
    run.lib = run.load()
    run.art()
    run.merge()
    return _finish(run)


def cmd_render(cfg: PipelineConfig, jobs: Optional[int] = None) -> RunReport:
    require(cfg, "render")
    run = Run(cfg, "render", jobs)
    run.render_tiles(_render_source(run), _spill_dir(cfg))
    return _finish(run)


def cmd_compose(cfg: PipelineConfig, jobs: Optional[int] = None) -> RunReport:
    require(cfg, "compose")
    run = Run(cfg, "compose", jobs)
    manifest = run.compose_tiles(_spill_dir(cfg))
    run.pdf(manifest)
    return _finish(run)


def cmd_pipeline(cfg: PipelineConfig, jobs: Optional[int] = None) -> RunReport:
    require(cfg, "pipeline")
    run = Run(cfg, "pipeline", jobs)
    run.lib = run.load()
    run.extract()
    source = run.lib
    if cfg.logo is not None:
        run.art()
        run.merge()
        source = run.merged
    manifest = run.render_compose(source, cfg.output("tiles_dir"))
    run.pdf(manifest)
    return _finish(run)


def _finish(run: Run) -> RunReport:
    run.validate()
    run.clock.finish()
    return run.report


COMMANDS = {
    "extract": cmd_extract,
    "art": cmd_art,
    "merge": cmd_merge,
    "render": cmd_render,
    "compose": cmd_compose,
    "pipeline": cmd_pipeline,
}
