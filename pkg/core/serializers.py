import os
import json
import logging

import numpy as np

from jumpput import settings
from .config import parse_model
from .exceptions import ConfigError
from .fundsol import pair_for
from .gridfn import Grid, GridFunction, TailMode
from .solver import Diagnostics, Solution

logger = logging.getLogger(__name__)

VALUE_CSV = 'value.csv'
SOLUTION_JSON = 'solution.json'


def write_csv(path, columns, header):
    table = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    np.savetxt(path, table, fmt=settings.CSV_FORMAT, delimiter=',', header=','.join(header), comments='')
    return path


def read_csv(path):
    """Header names and the numeric table of a CSV written by write_csv"""
    with open(path) as handle:
        header = handle.readline().strip().split(',')
    table = np.loadtxt(path, delimiter=',', skiprows=1, ndmin=2)
    return header, table


def write_json(path, data):
    with open(path, 'w') as handle:
        json.dump(data, handle, indent=2)
        handle.write('\n')
    return path


def solution_to_dict(sol, value_csv=VALUE_CSV):
    return {
        'model': sol.model.to_dict(),
        'grid': sol.grid.to_dict(),
        'epsilon': sol.epsilon,
        'boundaries': [float(l) for l in sol.boundaries],
        'n_iter': sol.n_iter,
        'deltas': [float(d) for d in sol.deltas],
        'diagnostics': sol.diagnostics.as_dict(),
        'v': value_csv,
    }


def write_solution(sol, out_dir):
    """value.csv with columns x,value and solution.json pointing at it"""
    csv_path = write_csv(os.path.join(out_dir, VALUE_CSV), [sol.grid.nodes, sol.v.values], ['x', 'value'])
    json_path = write_json(os.path.join(out_dir, SOLUTION_JSON), solution_to_dict(sol))
    logger.info(f"Solution written to {json_path} and {csv_path}")
    return json_path, csv_path


def load_solution(json_path):
    with open(json_path) as handle:
        data = json.load(handle)
    model = parse_model(data['model'])
    csv_path = os.path.join(os.path.dirname(json_path), data['v'])
    header, table = read_csv(csv_path)
    if header != ['x', 'value']:
        raise ConfigError(f'{csv_path} does not hold x,value columns')

    grid = Grid.from_nodes(table[:, 0], model.strike)
    if grid.n != data['grid']['n']:
        raise ConfigError(f"{csv_path} has {grid.n} rows, solution.json expects {data['grid']['n']}")
    v = GridFunction(grid, table[:, 1], TailMode.BOTH, pair_for(model, grid), model.strike)
    return Solution(
        v=v,
        boundaries=list(data['boundaries']),
        n_iter=data['n_iter'],
        deltas=list(data['deltas']),
        diagnostics=Diagnostics.from_dict(data['diagnostics']),
        model=model,
        epsilon=data['epsilon'],
    )


def write_trace(sol, path):
    rows = sol.trace_rows()
    columns = list(zip(*rows)) if rows else [[], [], [], []]
    return write_csv(path, columns, ['n', 'l_n', 'sup_delta', 'rate_bound'])


def write_sweep(rows, path):
    columns = list(zip(*rows)) if rows else [[], [], []]
    return write_csv(path, columns, ['value', 'boundary', 'v_at_spot'])


def write_objective(ls, values, path):
    return write_csv(path, [ls, values], ['l', 'G'])
