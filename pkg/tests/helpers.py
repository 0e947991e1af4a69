"""Small builders shared by the test modules."""

import numpy as np

from relcast.sweep import Dataset, FeatureSchema, ParameterDescriptor, ParamKind, Sample


def array_dataset(X, y, names=None) -> Dataset:
    """Dataset of continuous columns ``x0, x1, ...`` from plain arrays."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    names = names or [f"x{j}" for j in range(X.shape[1])]
    params = tuple(
        ParameterDescriptor(n, ParamKind.CONTINUOUS, levels=tuple(sorted(set(X[:, j].tolist()))))
        for j, n in enumerate(names)
    )
    schema = FeatureSchema(params)
    samples = tuple(Sample(row.copy(), dict(zip(names, row.tolist())), float(t)) for row, t in zip(X, y))
    return Dataset(schema, samples)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}")
