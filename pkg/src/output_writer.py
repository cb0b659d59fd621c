import csv
import json
import math
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from certifier import Certificate, CombinedBound
from lyapunov import AssumptionReport, LyapunovData
from simulator import AuditReport, HybridTrajectory, bound_values

TOOL_VERSION = '1.0.0'


class OutputWriterError(Exception):
    pass


def summary_number(value) -> str:
    """6 significant digits for console summaries."""
    if value is None:
        return '-'
    return f"{value:.6g}"


def csv_number(value: float) -> str:
    return f"{value:.17g}"


def json_safe(value):
    """Replace non-finite floats and numpy types so json.dump stays strict."""
    if isinstance(value, dict):
        return {str(k): json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    if isinstance(value, np.ndarray):
        return json_safe(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return value
    return value


def _write_json(data: Dict, output_path: str) -> str:
    try:
        Path(output_path).parent.mkdir(parents=True, exist_ok=True)
        with open(output_path, 'w', encoding='utf-8') as f:
            json.dump(json_safe(data), f, indent=2)
    except OSError as e:
        raise OutputWriterError(f"Failed to write {output_path}: {e}")
    return str(output_path)


def _write_rows(header: Sequence[str], rows, output_path: str) -> str:
    try:
        Path(output_path).parent.mkdir(parents=True, exist_ok=True)
        with open(output_path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as e:
        raise OutputWriterError(f"Failed to write {output_path}: {e}")
    return str(output_path)


def write_manifest(output_dir: str, command: str, spec_path: str, resolved: Dict) -> str:
    """The only output carrying a timestamp; written before anything else."""
    manifest = {
        'tool': 'sgues-certifier',
        'version': TOOL_VERSION,
        'command': command,
        'spec': str(spec_path),
        'output_dir': str(output_dir),
        'configuration': resolved,
        'created': datetime.now().isoformat(timespec='seconds'),
    }
    return _write_json(manifest, str(Path(output_dir) / 'manifest.json'))


def lyapunov_report(lyap: LyapunovData, assumption: Optional[AssumptionReport] = None) -> Dict:
    N = lyap.mode_count
    report = {
        'classification': lyap.classification.as_dict() if lyap.classification else None,
        'm': lyap.m,
        'P': {str(i): lyap.P[i - 1] for i in range(1, N + 1)},
        'Q': {str(i): Q for i, Q in sorted(lyap.Q.items())},
        'Q_tilde': {str(i): Q for i, Q in sorted(lyap.Q_tilde.items())},
        'lambda_bar': list(lyap.lam_bar),
        'r_bar': lyap.r_bar,
        'K_lower': list(lyap.k_lower),
        'K_upper': list(lyap.k_upper),
    }
    if assumption is not None:
        report['assumption_check'] = {
            'sandwich_margin': assumption.sandwich_margin,
            'flow_margin': assumption.flow_margin,
            'jump_margin': assumption.jump_margin,
            'worst_flow_mode': assumption.worst_flow_mode,
            'worst_jump_pair': list(assumption.worst_jump_pair),
            'passed': assumption.passed,
        }
    return report


def write_lyapunov_report(lyap: LyapunovData, output_path: str,
                          assumption: Optional[AssumptionReport] = None, spec_path: str = '') -> str:
    return _write_json({'spec': spec_path, 'lyapunov': lyapunov_report(lyap, assumption)}, output_path)


def write_certification_report(report: Dict, output_path: str) -> str:
    return _write_json(report, output_path)


def certification_report(spec_path: str, inputs: Dict, run_config: Dict, lyap: LyapunovData,
                         R_table: Dict[int, Optional[float]], certs: List[Certificate],
                         best: Optional[Certificate], combined: CombinedBound,
                         extras: Optional[Dict] = None) -> Dict:
    report = {
        'spec': str(spec_path),
        'inputs': inputs,
        'run': run_config,
        'lyapunov': lyapunov_report(lyap),
        'R_table': {str(L): ('no-walk' if R is None else R) for L, R in sorted(R_table.items())},
        'certificates': [c.as_dict() for c in certs],
        'best': best.as_dict() if best is not None else None,
        'any_valid': any(c.valid for c in certs),
        'combined_bound': {'crossovers': combined.crossovers(), 'decaying': combined.decaying},
    }
    if extras:
        report.update(extras)
    return report


def write_combined_bound_csv(combined: CombinedBound, output_path: str,
                             s_max: float = 20.0, samples: int = 401) -> str:
    s = np.linspace(0.0, s_max, samples)
    beta = combined(1.0, s)
    rows = [[csv_number(a), csv_number(b)] for a, b in zip(s, beta)]
    return _write_rows(['s', 'beta'], rows, output_path)


def write_trajectory_csv(trajectory: HybridTrajectory, output_path: str, bound=None) -> str:
    """One row per sample and two per event (left limit, then value)."""
    n = trajectory.states.shape[1]
    envelope = bound_values(trajectory, bound) if bound is not None else np.full(len(trajectory.times), np.nan)
    header = ['t'] + [f"x_{k}" for k in range(1, n + 1)] + ['mode', 'n_nu', 'n_mu', 'bound_value']
    rows = []
    for k in range(len(trajectory.times)):
        rows.append([csv_number(trajectory.times[k])]
                    + [csv_number(v) for v in trajectory.states[k]]
                    + [int(trajectory.modes[k]), int(trajectory.n_nu[k]), int(trajectory.n_mu[k]),
                       csv_number(envelope[k])])
    return _write_rows(header, rows, output_path)


def audit_summary(report: AuditReport) -> Dict:
    return {
        'passed': report.passed,
        'slacks': report.slacks,
        'worst_pairs': {k: list(v) for k, v in report.worst_pairs.items()},
        'inadmissible_switches': [list(s) for s in report.inadmissible_switches],
    }


def write_simulation_report(rows: List[Dict], output_path: str, extras: Optional[Dict] = None) -> str:
    data = {'runs': rows}
    if extras:
        data.update(extras)
    return _write_json(data, output_path)


def format_certificate_table(certs: Sequence[Certificate]) -> str:
    header = f"{'config':<34} {'R(L)':>10} {'lambda_s':>10} {'r_s':>10} {'lambda0':>10} {'K':>12} {'lambda':>10}  valid"
    lines = [header, '-' * len(header)]
    for c in certs:
        lines.append(f"{c.config.label():<34} {summary_number(c.R_L):>10} {summary_number(c.lam_s):>10} "
                     f"{summary_number(c.r_s):>10} {summary_number(c.lambda0):>10} {summary_number(c.K):>12} "
                     f"{summary_number(c.lam):>10}  {'✓' if c.valid else '✗'}")
    return '\n'.join(lines)
