from pathlib import Path
from typing import Dict, List, Mapping, Sequence

import pandas as pd

METRIC_COLUMNS = ['step', 'metric_name', 'value', 'seed']
FLOAT_FORMAT = '%.10g'


class MetricsLog:
    """Long-format metric rows (step, metric_name, value, seed) written as CSV"""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.rows: List[Dict] = []

    def record(self, step: int, metrics: Mapping[str, float]) -> None:
        for name, value in metrics.items():
            self.rows.append({'step': int(step), 'metric_name': name, 'value': float(value), 'seed': self.seed})

    def extend(self, rows: Sequence[Mapping]) -> None:
        self.rows.extend(dict(row) for row in rows)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=METRIC_COLUMNS)

    def write_csv(self, path) -> Path:
        path = Path(path)
        self.to_frame().to_csv(path, index=False, float_format=FLOAT_FORMAT)
        return path

    @classmethod
    def read_csv(cls, path) -> 'MetricsLog':
        frame = pd.read_csv(path)
        log = cls(seed=int(frame['seed'].iloc[0]) if len(frame) else 0)
        log.extend(frame.to_dict('records'))
        return log

    def latest(self, metric_name: str) -> float:
        frame = self.to_frame()
        values = frame.loc[frame['metric_name'] == metric_name, 'value']
        if values.empty:
            raise KeyError(f'no {metric_name} rows recorded')
        return float(values.iloc[-1])


def write_coverage_curves(path, curves: Sequence[pd.DataFrame]) -> Path:
    path = Path(path)
    pd.concat(list(curves), ignore_index=True).to_csv(path, index=False)
    return path
