# =============================================================================
# trace_storage.py - Trace, table and report files
# =============================================================================

import json
import logging
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import pandas as pd

from cavern_validation import SimulationTrace

TRACE_COLUMNS = ['t_s', 'm_kg', 'p_pa', 'T_k']
FLOAT_FORMAT = '%.17g'


def atomic_write_text(path: Union[str, Path], text: str) -> Path:
    """Write text to path via a temp file in the same directory and a rename"""
    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(prefix=f'.{path.name}.', suffix='.tmp', dir=path.parent)
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def _ensure_json_serializable(data: Any) -> Any:
    """Convert numpy/pandas values and non-finite floats into plain JSON types"""
    if isinstance(data, dict):
        return {str(key): _ensure_json_serializable(value) for key, value in data.items()}
    elif isinstance(data, (list, tuple)):
        return [_ensure_json_serializable(item) for item in data]
    elif isinstance(data, pd.DataFrame):
        return _ensure_json_serializable(data.to_dict(orient='split'))
    elif isinstance(data, pd.Series):
        return _ensure_json_serializable(data.tolist())
    elif isinstance(data, np.ndarray):
        return _ensure_json_serializable(data.tolist())
    elif isinstance(data, np.bool_):
        return bool(data)
    elif isinstance(data, np.integer):
        return int(data)
    elif isinstance(data, (float, np.floating)):
        value = float(data)
        return value if math.isfinite(value) else None
    elif hasattr(data, 'value') and isinstance(getattr(data, 'value'), str):
        # Enum members such as ModelKind
        return data.value
    return data


class TraceStorage:
    """
    Writes simulation traces, report tables and reports.

    Relative paths are resolved against base_dir (default: the working
    directory). Every write is atomic.
    """

    def __init__(self, base_dir: Optional[Union[str, Path]] = None):
        self.base_dir = Path(base_dir) if base_dir is not None else Path.cwd()

    def _resolve(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        return path if path.is_absolute() else self.base_dir / path

    def render_trace(self, trace: SimulationTrace, fmt: str = 'csv') -> str:
        if fmt == 'csv':
            return trace.to_dataframe().to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
        if fmt == 'json':
            payload = {
                'model': trace.model.value,
                'scenario': trace.scenario,
                'dt': trace.dt,
                'records': trace.to_dataframe().to_dict(orient='records'),
                'warnings': [{'t_s': t, 'message': message} for t, message in trace.warnings],
            }
            return json.dumps(_ensure_json_serializable(payload), indent=2) + '\n'
        raise ValueError(f"unsupported trace format {fmt!r}")

    def render_table(self, table: pd.DataFrame, fmt: str = 'csv') -> str:
        if fmt == 'csv':
            return table.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
        if fmt == 'json':
            return json.dumps(_ensure_json_serializable(table.to_dict(orient='records')), indent=2) + '\n'
        raise ValueError(f"unsupported table format {fmt!r}")

    def write_trace(self, trace: SimulationTrace, path: Union[str, Path], fmt: str = 'csv') -> Path:
        target = atomic_write_text(self._resolve(path), self.render_trace(trace, fmt))
        logging.info(f"Wrote {len(trace.records)} records of {trace.model.value}/{trace.scenario} to {target}")
        return target

    def write_table(self, table: pd.DataFrame, path: Union[str, Path], fmt: str = 'csv') -> Path:
        target = atomic_write_text(self._resolve(path), self.render_table(table, fmt))
        logging.info(f"Wrote table with {len(table)} rows to {target}")
        return target

    def render_report(self, report: Dict) -> str:
        return json.dumps(_ensure_json_serializable(report), indent=2) + '\n'

    def write_report(self, report: Dict, path: Union[str, Path]) -> Path:
        target = atomic_write_text(self._resolve(path), self.render_report(report))
        logging.info(f"Wrote report to {target}")
        return target

    def load_trace(self, path: Union[str, Path]) -> pd.DataFrame:
        """
        Read a trace written by write_trace back into a DataFrame.

        JSON metadata (model, scenario, dt, warnings) lands in df.attrs.
        """
        path = self._resolve(path)
        if path.suffix.lower() == '.json':
            payload = json.loads(path.read_text(encoding='utf-8'))
            frame = pd.DataFrame(payload['records'], columns=TRACE_COLUMNS)
            frame.attrs.update({key: payload.get(key) for key in ('model', 'scenario', 'dt', 'warnings')})
            return frame
        frame = pd.read_csv(path, float_precision='round_trip')
        if list(frame.columns) != TRACE_COLUMNS:
            raise ValueError(f"{path} is not a trace file: columns {list(frame.columns)}")
        return frame
