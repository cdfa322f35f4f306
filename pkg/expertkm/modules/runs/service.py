"""CSV ingestion and emission, and run manifests."""

import hashlib
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger

from expertkm import __version__
from expertkm.modules.kernels.schemas import BeliefKernel
from expertkm.modules.kernels.service import KernelService
from expertkm.modules.runs.schemas import Command, FileRecord, RunManifest
from expertkm.modules.survival.schemas import Observation
from expertkm.modules.survival.service import SurvivalService
from expertkm.utils import constants
from expertkm.utils.exceptions import ValidationError

OBSERVATION_COLUMNS = ["id", "w", "delta", "eta", "x_true", "y_true", "c_true"]
KERNEL_COLUMNS = ["id", "kind", "p1", "p2"]
CURVE_COLUMNS = ["t", "estimate"]


def _read_csv(path: Path, required: Sequence[str]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, float_precision="round_trip", keep_default_na=True)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ValidationError(f"cannot read {path}: {exc}")
    missing = [name for name in required if name not in frame.columns]
    if missing:
        raise ValidationError(f"{path}: missing required column(s) {missing}")
    return frame


def _numeric(frame: pd.DataFrame, column: str, path: Path) -> Optional[np.ndarray]:
    if column not in frame.columns:
        return None
    values = pd.to_numeric(frame[column], errors="coerce")
    bad = np.flatnonzero(values.isna() & frame[column].notna())
    if bad.size:
        raise ValidationError(f"{path}: non-numeric {column} at rows {bad.tolist()[:20]}", indices=bad.tolist())
    return values.to_numpy(dtype=float)


def _ids(frame: pd.DataFrame, path: Path) -> list[int]:
    values = pd.to_numeric(frame["id"], errors="coerce").to_numpy(dtype=float)
    bad = np.flatnonzero(~np.isfinite(values) | (values != np.round(values)))
    if bad.size:
        raise ValidationError(f"{path}: non-integer id at rows {bad.tolist()[:20]}", indices=bad.tolist())
    return values.astype(np.int64).tolist()


class RunService:
    """Service for observation/kernel/curve files and run manifests."""

    @staticmethod
    def read_observations(path: Path) -> tuple[list[Observation], list[int]]:
        """
        Read an observation CSV (id,w,delta,eta,x_true,y_true,c_true).

        Only w and delta are required; empty fields mean absent. Missing ids
        default to the row number.

        Returns:
            Observations and their ids, in file order
        """
        path = Path(path)
        frame = _read_csv(path, ["w", "delta"])
        for column in ("w", "delta"):
            empty = np.flatnonzero(frame[column].isna().to_numpy())
            if empty.size:
                raise ValidationError(f"{path}: empty {column} at rows {empty.tolist()[:20]}", indices=empty.tolist())

        ids = _ids(frame, path) if "id" in frame.columns else list(range(len(frame)))
        if len(set(ids)) != len(ids):
            raise ValidationError(f"{path}: duplicate ids")

        columns = {name: _numeric(frame, name, path) for name in ("w", "delta", "eta", "x_true", "y_true", "c_true")}
        observations = SurvivalService.build_observations(**columns)
        logger.info(f"📥 Read {len(observations)} observations from {path}")
        return observations, ids

    @staticmethod
    def write_observations(path: Path, obs: Sequence[Observation], ids: Optional[Sequence[int]] = None, eta=None) -> Path:
        """Write observations; `eta` (input order) overrides the stored judgments."""
        path = Path(path)
        ids = list(range(len(obs))) if ids is None else list(ids)
        eta = [o.eta for o in obs] if eta is None else list(eta)
        frame = pd.DataFrame({
            "id": ids,
            "w": [o.w for o in obs],
            "delta": [o.delta for o in obs],
            "eta": pd.array([np.nan if v is None else float(v) for v in eta], dtype=float),
            "x_true": [np.nan if o.x_true is None else o.x_true for o in obs],
            "y_true": [np.nan if o.y_true is None else o.y_true for o in obs],
            "c_true": [np.nan if o.c_true is None else o.c_true for o in obs],
        }, columns=OBSERVATION_COLUMNS)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=constants.FLOAT_FORMAT, na_rep="")
        logger.info(f"💾 Wrote {len(frame)} observations to {path}")
        return path

    @staticmethod
    def read_kernels(path: Path, ids: Sequence[int], obs: Sequence[Observation]) -> list[Optional[BeliefKernel]]:
        """
        Read a kernel CSV (id,kind,p1,p2); each kernel's lower bound is its observation's w.

        Returns:
            Kernels aligned with `obs`, None where the file has no row
        """
        path = Path(path)
        frame = _read_csv(path, KERNEL_COLUMNS)
        position = {int(i): k for k, i in enumerate(ids)}
        p1 = _numeric(frame, "p1", path)
        p2 = _numeric(frame, "p2", path)
        kernel_ids = _ids(frame, path)

        kernels: list[Optional[BeliefKernel]] = [None] * len(obs)
        for row, (kernel_id, kind) in enumerate(zip(kernel_ids, frame["kind"])):
            if kernel_id not in position:
                raise ValidationError(f"{path}: row {row} refers to unknown id {kernel_id!r}", indices=[row])
            k = position[kernel_id]
            if kernels[k] is not None:
                raise ValidationError(f"{path}: duplicate kernel for id {kernel_id!r}", indices=[row])
            kernels[k] = KernelService.make_kernel(
                kind, obs[k].w, float(p1[row]), None if np.isnan(p2[row]) else float(p2[row]), index=row
            )
        logger.info(f"📥 Read {sum(k is not None for k in kernels)} kernels from {path}")
        return kernels

    @staticmethod
    def write_kernels(path: Path, kernels: Sequence[Optional[BeliefKernel]], ids: Optional[Sequence[int]] = None) -> Path:
        path = Path(path)
        ids = list(range(len(kernels))) if ids is None else list(ids)
        rows = [
            {"id": i, "kind": k.kind, "p1": k.p1, "p2": np.nan if k.p2 is None else k.p2}
            for i, k in zip(ids, kernels)
            if k is not None
        ]
        frame = pd.DataFrame(rows, columns=KERNEL_COLUMNS)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=constants.FLOAT_FORMAT, na_rep="")
        logger.info(f"💾 Wrote {len(frame)} kernels to {path}")
        return path

    @staticmethod
    def write_curve(path: Path, grid: np.ndarray, values: np.ndarray) -> Path:
        path = Path(path)
        frame = pd.DataFrame({"t": np.asarray(grid, dtype=float), "estimate": np.asarray(values, dtype=float)}, columns=CURVE_COLUMNS)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=constants.FLOAT_FORMAT, na_rep="")
        return path

    @staticmethod
    def write_table(path: Path, frame: pd.DataFrame) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=constants.FLOAT_FORMAT, na_rep="")
        return path

    # ======================== MANIFESTS ========================

    @staticmethod
    def sha256_file(path: Path) -> str:
        digest = hashlib.sha256()
        with Path(path).open("rb") as handle:
            for chunk in iter(lambda: handle.read(1024 * 1024), b""):
                digest.update(chunk)
        return digest.hexdigest()

    @staticmethod
    def file_record(path: Path) -> FileRecord:
        path = Path(path)
        return FileRecord(path=str(path), sha256=RunService.sha256_file(path), size_bytes=path.stat().st_size)

    @staticmethod
    def manifest_path(output: Path) -> Path:
        output = Path(output)
        return output.with_name(output.name + ".manifest.json")

    @staticmethod
    def write_manifest(
        output: Path,
        command: Command,
        arguments: dict,
        config: dict,
        inputs: Sequence[Path] = (),
        outputs: Sequence[Path] = (),
    ) -> Path:
        """Write `<output>.manifest.json` next to the primary output."""
        manifest = RunManifest(
            command=command,
            arguments=arguments,
            config=config,
            inputs=[RunService.file_record(p) for p in inputs],
            outputs=[RunService.file_record(p) for p in outputs],
            version=__version__,
        )
        path = RunService.manifest_path(output)
        path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
        logger.debug(f"Manifest written to {path}")
        return path

    @staticmethod
    def read_manifest(path: Path) -> RunManifest:
        try:
            return RunManifest.model_validate_json(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ValidationError(f"cannot read manifest {path}: {exc}")

    @staticmethod
    def changed_files(records: Sequence[FileRecord]) -> list[str]:
        """Paths whose current digest differs from the recorded one (or that vanished)."""
        changed = []
        for record in records:
            path = Path(record.path)
            if not path.exists() or RunService.sha256_file(path) != record.sha256:
                changed.append(record.path)
        return changed
