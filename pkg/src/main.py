import argparse
import json
import math
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from dotenv import load_dotenv

from certifier import (CertConfig, Certificate, CertifierError, best_certificate, certify, combined_bound,
                       iiss_margin, sweep)
from jumpgraph import JumpGraphError, WeightedJumpGraph, combined_weight
from lyapunov import LyapunovData, LyapunovError, build_lyapunov_data, check_assumption_one
from model import InputSignal, ModelError, PerturbedLinearFlow, SpecFormatError, SystemSpec, load_system_spec, \
    validate_system
from output_writer import (OutputWriterError, audit_summary, certification_report, format_certificate_table,
                           summary_number, write_certification_report, write_combined_bound_csv,
                           write_lyapunov_report, write_manifest, write_simulation_report, write_trajectory_csv)
from simulator import (PerturbationBound, SimulatorError, audit_signal, generate_signal, initial_state,
                       lyapunov_functional_check, simulate, theta_deficit, verify_bound)

EXIT_OK = 0
EXIT_NO_CERTIFICATE = 1
EXIT_INPUT_ERROR = 2

DEFAULT_CONFIG = Path(__file__).parent.parent / 'config' / 'config.json'
VERIFY_TOL = 1e-6
RECOMPUTE_TOL = 1e-9

CONFIG_DEFAULTS = {
    'output_dir': 'out',
    'certify': {'L': [1, 2, 3], 'objective': 'lambda', 'refine': False},
    'sweep': {'cs_grid': None, 'c_points': 20, 'c_floor': 1e-3, 'c_ceiling': 1e3},
    'simulation': {'seeds': 100, 'horizon': 10.0, 'step': 0.01, 'style': 'periodic'},
    'combined_bound': {'s_max': 20.0, 'samples': 401},
    'assumption_check': {'samples': 10000, 'seed': 0},
}


def _add_common(parser):
    parser.add_argument('spec', type=str, help='System specification file (JSON)')
    parser.add_argument('--config', type=str, default=None,
                        help='Run defaults file (default: $SGUES_CONFIG or config/config.json)')
    parser.add_argument('--output-dir', type=str, default=None,
                        help='Directory for output files (default: $SGUES_OUTPUT_DIR or "out")')


def _add_coefficients(parser):
    parser.add_argument('--L', type=str, default=None,
                        help='Comma-separated walk lengths, e.g. 1,2,3')
    parser.add_argument('--cs', type=float, default=None, help='Switching balancing coefficient c_s')
    parser.add_argument('--ci', type=str, action='append', default=None,
                        help='Mode coefficient as i=value (repeatable)')
    parser.add_argument('--sweep', action='store_true', help='Scan coefficient grids instead of fixed values')
    parser.add_argument('--objective', type=str, choices=['lambda', 'K'], default=None,
                        help='Sweep objective: largest lambda or smallest K among valid certificates')
    parser.add_argument('--refine', action='store_true', help='Refine c_s around the best sweep point')


def parse_arguments(argv=None):
    parser = argparse.ArgumentParser(
        description='Certify strong exponential stability of switched impulsive systems.',
        epilog='''
        Examples:
            python main.py synth config/systems/unstable_mode_family.json
            python main.py certify config/systems/unstable_mode_family.json --L 1,2,3 --cs 0.6 --ci 1=0.8 --ci 2=2.3
            python main.py simulate config/systems/unstable_mode_family.json --seeds 20 --horizon 10
            python main.py verify config/systems/unstable_mode_family.json --report out/certification_report.json
        '''
    )
    subparsers = parser.add_subparsers(dest='command', required=True)

    synth = subparsers.add_parser('synth', help='Build Lyapunov data and write the report')
    _add_common(synth)

    cert = subparsers.add_parser('certify', help='Compute certificates and the combined bound')
    _add_common(cert)
    _add_coefficients(cert)

    sim = subparsers.add_parser('simulate', help='Simulate admissible trajectories against the certificate')
    _add_common(sim)
    _add_coefficients(sim)
    sim.add_argument('--report', type=str, default=None,
                     help='Certification report to take certificates from (default: certify inline)')
    sim.add_argument('--seeds', type=int, default=None, help='Number of seeds (0..k-1)')
    sim.add_argument('--horizon', type=float, default=None, help='Simulation horizon')
    sim.add_argument('--step', type=float, default=None, help='Integration step')
    sim.add_argument('--style', type=str, choices=['periodic', 'randomized'], default=None,
                     help='Signal generator style')
    sim.add_argument('--no-csv', action='store_true', help='Skip per-seed trajectory CSV files')

    verify = subparsers.add_parser('verify', help='Recompute a certification report and re-simulate its seeds')
    _add_common(verify)
    verify.add_argument('--report', type=str, required=True, help='Certification report to verify')

    args = parser.parse_args(argv)

    if not os.path.exists(args.spec):
        parser.error(f"Specification file not found: {args.spec}")
    if getattr(args, 'report', None) and not os.path.exists(args.report):
        parser.error(f"Report file not found: {args.report}")

    if getattr(args, 'L', None):
        try:
            args.L_list = [int(v.strip()) for v in args.L.split(',') if v.strip()]
        except ValueError:
            parser.error(f"--L expects comma-separated integers, got {args.L}")
    else:
        args.L_list = None

    args.c_values = {}
    for item in getattr(args, 'ci', None) or []:
        key, sep, value = item.partition('=')
        try:
            args.c_values[int(key)] = float(value)
        except ValueError:
            sep = ''
        if not sep:
            parser.error(f"--ci expects i=value, got {item}")

    return args


def load_environment():
    load_dotenv()
    return {
        'config': os.getenv('SGUES_CONFIG'),
        'output_dir': os.getenv('SGUES_OUTPUT_DIR'),
    }


def load_run_config(path) -> Dict:
    config = json.loads(json.dumps(CONFIG_DEFAULTS))
    if path and Path(path).exists():
        with open(path, 'r', encoding='utf-8') as f:
            loaded = json.load(f)
        for key, value in loaded.items():
            if isinstance(value, dict) and isinstance(config.get(key), dict):
                config[key].update(value)
            else:
                config[key] = value
    elif path and path != str(DEFAULT_CONFIG):
        print(f"   Warning: config file {path} not found, using built-in defaults")
    return config


# ---------------------------------------------------------------------------
# Pipeline steps
# ---------------------------------------------------------------------------

def load_inputs(spec_path: str) -> SystemSpec:
    spec = load_system_spec(spec_path)
    report = validate_system(spec.system, spec.profile)
    for warning in report.warnings:
        print(f"   Warning: {warning}")
    if not report.is_valid:
        for violation in report.violations:
            print(f"✗ {violation}")
        raise ModelError(f"{spec_path} failed validation with {len(report.violations)} violation(s)")
    print(f"✓ Loaded {spec.system.name or spec_path}: {spec.system.mode_count} modes, "
          f"dimension {spec.system.dimension}, {len(spec.system.graph.edges)} edges")
    return spec


def prepare_lyapunov(spec: SystemSpec, cfg: Dict):
    lyap = build_lyapunov_data(spec.system, spec.lyapunov, spec.profile)
    assumption = None
    if 'lambda_bar' in spec.lyapunov:
        check = cfg['assumption_check']
        assumption = check_assumption_one(spec.system, lyap, int(check['samples']), int(check['seed']))
        if not assumption.passed:
            raise LyapunovError("user V-data fails the sampled bounding inequalities "
                                f"(flow {assumption.flow_margin:.3e}, jump {assumption.jump_margin:.3e})")
        print("✓ User V-data passes the sampled bounding inequalities")
    else:
        print(f"✓ Lyapunov data synthesized ({format_classification(lyap)})")
    return lyap, assumption


def format_classification(lyap: LyapunovData) -> str:
    if lyap.classification is None:
        return 'user data'
    parts = [f"{kind}={sorted(modes)}" for kind, modes in lyap.classification.as_dict().items() if modes]
    return ', '.join(parts)


def resolve_certify_options(args, spec: SystemSpec, cfg: Dict) -> Dict:
    section = spec.certify
    L_list = getattr(args, 'L_list', None) or section.get('L') or cfg['certify']['L']
    cs = getattr(args, 'cs', None)
    if cs is None:
        cs = section.get('c_s')
    c_values = getattr(args, 'c_values', None) or {int(k): float(v) for k, v in (section.get('c') or {}).items()}
    use_sweep = bool(getattr(args, 'sweep', False)) or cs is None
    return {
        'L': [int(v) for v in L_list],
        'c_s': None if use_sweep else float(cs),
        'c': {} if use_sweep else c_values,
        'sweep': use_sweep,
        'objective': getattr(args, 'objective', None) or cfg['certify']['objective'],
        'refine': bool(getattr(args, 'refine', False)) or bool(cfg['certify'].get('refine')),
    }


def run_certification(spec: SystemSpec, lyap: LyapunovData, options: Dict, cfg: Dict):
    system, profile = spec.system, spec.profile
    weighted = WeightedJumpGraph.from_lyapunov(system.graph, lyap)
    lengths = options['L'] if weighted.has_edges else [0]
    R_table = {L: combined_weight(weighted, L) for L in lengths}
    if all(R is None for R in R_table.values()):
        raise CertifierError(f"no-walk: the jump graph has no walk of any requested length {lengths}")

    certs: List[Certificate] = []
    for L in lengths:
        if R_table[L] is None:
            print(f"   Warning: no-walk at L={L}, skipped")
            continue
        if options['sweep']:
            grid = cfg['sweep']
            result = sweep(lyap, profile, weighted, system, [L], cs_grid=grid.get('cs_grid'),
                           objective=options['objective'], refine=options['refine'],
                           c_points=int(grid['c_points']), c_floor=float(grid['c_floor']),
                           c_ceiling=float(grid['c_ceiling']))
            for reason, count in sorted(result.skipped.items()):
                print(f"   Warning: L={L}: {count} sweep point(s) skipped ({reason})")
            if result.best is not None:
                certs.append(result.best)
        else:
            try:
                certs.append(certify(lyap, profile, CertConfig(L, options['c_s'], dict(options['c'])),
                                     weighted, system))
            except CertifierError as e:
                print(f"   Warning: L={L} skipped: {e}")
    if not certs:
        raise CertifierError("no certificate could be evaluated for the requested lengths")
    return certs, best_certificate(certs, options['objective']), R_table


def perturbation_summary(spec: SystemSpec, best: Optional[Certificate]) -> Optional[Dict]:
    check = spec.perturbation_check
    if not check:
        return None
    gains = [float(g) for g in check.get('theta_gains', [])]
    phases = check.get('phases', ['sin'] * len(gains))
    n_tilde = float(check.get('n_tilde', 0.0))
    horizon = float(check.get('horizon', 50.0))
    bounds = [PerturbationBound(g, p) for g, p in zip(gains, phases)]

    flow_gains = [f.gain for f in spec.system.flows if isinstance(f, PerturbedLinearFlow)]
    if flow_gains and len(flow_gains) == len(gains) and any(abs(a - b) > 1e-15 for a, b in zip(flow_gains, gains)):
        print(f"   Warning: theta gains {gains} differ from the flow perturbation gains {flow_gains}")

    deficit = theta_deficit(bounds, n_tilde, horizon)
    margin = iiss_margin(best) if best is not None and best.valid else None
    holds = margin is not None and deficit == 0.0 and n_tilde < margin
    return {'n_tilde': n_tilde, 'theta_gains': gains, 'theta_deficit': deficit,
            'iiss_margin': margin, 'holds': holds}


def simulation_options(args, cfg: Dict, stored: Optional[Dict] = None) -> Dict:
    base = dict(cfg['simulation'])
    if stored:
        base.update(stored)
    return {
        'seeds': int(getattr(args, 'seeds', None) or base['seeds']),
        'horizon': float(getattr(args, 'horizon', None) if getattr(args, 'horizon', None) is not None
                         else base['horizon']),
        'step': float(getattr(args, 'step', None) or base['step']),
        'style': getattr(args, 'style', None) or base['style'],
    }


def run_simulations(spec: SystemSpec, lyap: LyapunovData, certs: List[Certificate], best: Optional[Certificate],
                    sim: Dict, output_dir: str, write_csv: bool = True) -> Tuple[List[Dict], float]:
    system, profile = spec.system, spec.profile
    reference = best if best is not None and best.valid else None
    combined = combined_bound(certs)
    linear = system.is_linear()
    impulse_modes = {i for i in system.graph.modes if not system.has_identity_self_jump(i)}
    branch = reference.switching_branch if reference is not None else None
    u = InputSignal(**spec.raw.get('input', {})) if spec.raw.get('input') else InputSignal()

    rows = []
    worst = 0.0
    for seed in range(sim['seeds']):
        signal = generate_signal(profile, system.graph, sim['horizon'], seed, sim['style'], branch, impulse_modes)
        audit = audit_signal(signal, profile, system.graph, switching_branch=branch)
        trajectory = simulate(system, signal, initial_state(system.dimension, seed), 0.0, sim['step'], u)
        ratio = verify_bound(trajectory, reference) if reference is not None else None
        ratio_combined = verify_bound(trajectory, combined)
        functional = lyapunov_functional_check(trajectory, lyap) if linear else None
        if ratio is not None:
            worst = max(worst, ratio)

        row = {'seed': seed, 'events': len(signal.event_ticks), 'audit': audit_summary(audit),
               'ratio': ratio, 'ratio_combined': ratio_combined, 'functional_ratio': functional,
               'diverged': trajectory.diverged}
        if write_csv:
            row['csv'] = write_trajectory_csv(trajectory, str(Path(output_dir) / f"trajectory_seed{seed:03d}.csv"),
                                              reference if reference is not None else combined)
        rows.append(row)
        ok = audit.passed and (ratio is None or ratio <= 1 + VERIFY_TOL)
        print(f"{'✓' if ok else '✗'} seed {seed}: {row['events']} events, ratio {summary_number(ratio)}, "
              f"combined {summary_number(ratio_combined)}")
    return rows, worst


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_synth(args, cfg: Dict, output_dir: str) -> int:
    write_manifest(output_dir, 'synth', args.spec, {'assumption_check': cfg['assumption_check']})
    spec = load_inputs(args.spec)
    lyap, assumption = prepare_lyapunov(spec, cfg)
    path = write_lyapunov_report(lyap, str(Path(output_dir) / 'lyapunov_report.json'), assumption, args.spec)

    print(f"\n{'=' * 50}")
    print("LYAPUNOV DATA")
    print(f"{'=' * 50}")
    for i in spec.system.graph.modes:
        print(f"   mode {i}: lambda_bar = {summary_number(lyap.lam(i))}, "
              f"K in [{summary_number(lyap.k_lower[i - 1])}, {summary_number(lyap.k_upper[i - 1])}]")
    print("   r_bar:")
    for row in lyap.r_bar:
        print("      " + '  '.join(f"{summary_number(v) if not math.isnan(v) else '-':>10}" for v in row))
    print(f"\n✓ Lyapunov report: {path}")
    return EXIT_OK


def cmd_certify(args, cfg: Dict, output_dir: str) -> int:
    spec = load_inputs(args.spec)
    options = resolve_certify_options(args, spec, cfg)
    write_manifest(output_dir, 'certify', args.spec, {'certify': options, 'sweep': cfg['sweep'],
                                                      'combined_bound': cfg['combined_bound']})
    lyap, _ = prepare_lyapunov(spec, cfg)
    certs, best, R_table = run_certification(spec, lyap, options, cfg)
    combined = combined_bound(certs)

    print(f"\n{'=' * 50}")
    print("CERTIFICATES")
    print(f"{'=' * 50}")
    print(format_certificate_table(certs))
    for L, R in sorted(R_table.items()):
        print(f"   R({L}) = {summary_number(R) if R is not None else 'no-walk'}")
    crossovers = combined.crossovers()
    if crossovers:
        print(f"   Combined bound switches certificate at s = {', '.join(summary_number(s) for s in crossovers)}")

    extras = {}
    perturbation = perturbation_summary(spec, best)
    if perturbation is not None:
        extras['perturbation_check'] = perturbation
        print(f"   iISS margin: {summary_number(perturbation['iiss_margin'])}, "
              f"N = {summary_number(perturbation['n_tilde'])}, "
              f"theta deficit: {summary_number(perturbation['theta_deficit'])} "
              f"{'✓' if perturbation['holds'] else '✗'}")

    bound_cfg = cfg['combined_bound']
    csv_path = write_combined_bound_csv(combined, str(Path(output_dir) / 'combined_bound.csv'),
                                        float(bound_cfg['s_max']), int(bound_cfg['samples']))
    run = {'certify': options, 'simulation': cfg['simulation']}
    report = certification_report(args.spec, spec.raw, run, lyap, R_table, certs, best, combined, extras)
    report['combined_bound']['csv'] = csv_path
    report_path = write_certification_report(report, str(Path(output_dir) / 'certification_report.json'))

    print(f"\n✓ Certification report: {report_path}")
    print(f"✓ Combined bound (CSV): {csv_path}")
    if best is not None and best.valid:
        print(f"\n✓ S-GUES with K = {summary_number(best.K)}, lambda = {summary_number(best.lam)} "
              f"({best.config.label()})")
        return EXIT_OK
    print("\n✗ No valid certificate among the evaluated configurations")
    return EXIT_NO_CERTIFICATE


def _certificates_from_report(report: Dict, spec: SystemSpec, lyap: LyapunovData) -> List[Certificate]:
    weighted = WeightedJumpGraph.from_lyapunov(spec.system.graph, lyap)
    certs = []
    for entry in report.get('certificates', []):
        config = entry['config']
        certs.append(certify(lyap, spec.profile,
                             CertConfig(int(config['L']), float(config['c_s']),
                                        {int(k): float(v) for k, v in config.get('c', {}).items()}),
                             weighted, spec.system))
    return certs


def cmd_simulate(args, cfg: Dict, output_dir: str) -> int:
    spec = load_inputs(args.spec)
    stored = None
    if args.report:
        with open(args.report, 'r', encoding='utf-8') as f:
            stored_report = json.load(f)
        stored = stored_report.get('run', {}).get('simulation')
        options = stored_report.get('run', {}).get('certify', {})
    else:
        options = resolve_certify_options(args, spec, cfg)
    sim = simulation_options(args, cfg, stored)
    write_manifest(output_dir, 'simulate', args.spec, {'certify': options, 'simulation': sim,
                                                       'report': args.report})
    lyap, _ = prepare_lyapunov(spec, cfg)

    if args.report:
        certs = _certificates_from_report(stored_report, spec, lyap)
        best = best_certificate(certs, options.get('objective', 'lambda'))
    else:
        certs, best, _ = run_certification(spec, lyap, options, cfg)

    print(f"\n{'=' * 50}")
    print("SIMULATION")
    print(f"{'=' * 50}")
    rows, worst = run_simulations(spec, lyap, certs, best, sim, output_dir, not args.no_csv)
    path = write_simulation_report(rows, str(Path(output_dir) / 'simulation_report.json'),
                                   {'simulation': sim, 'reference': best.as_dict() if best else None,
                                    'worst_ratio': worst})
    print(f"\n✓ Simulation report: {path}")

    if best is None or not best.valid:
        print("✗ No valid certificate to verify against")
        return EXIT_NO_CERTIFICATE
    if worst > 1 + VERIFY_TOL or not all(r['audit']['passed'] for r in rows):
        print(f"✗ Verification failed: worst ratio {summary_number(worst)}")
        return EXIT_NO_CERTIFICATE
    print(f"✓ All trajectories within the envelope (worst ratio {summary_number(worst)})")
    return EXIT_OK


def cmd_verify(args, cfg: Dict, output_dir: str) -> int:
    with open(args.report, 'r', encoding='utf-8') as f:
        report = json.load(f)
    spec = load_inputs(args.spec)
    sim = simulation_options(args, cfg, report.get('run', {}).get('simulation'))
    write_manifest(output_dir, 'verify', args.spec, {'report': args.report, 'simulation': sim})
    lyap, _ = prepare_lyapunov(spec, cfg)

    print(f"\n{'=' * 50}")
    print("RECOMPUTED CERTIFICATES")
    print(f"{'=' * 50}")
    certs = _certificates_from_report(report, spec, lyap)
    mismatches = 0
    for stored, cert in zip(report.get('certificates', []), certs):
        same = (math.isclose(stored['K'], cert.K, rel_tol=RECOMPUTE_TOL)
                and math.isclose(stored['lambda'], cert.lam, rel_tol=RECOMPUTE_TOL, abs_tol=1e-15)
                and stored['valid'] == cert.valid)
        mismatches += not same
        print(f"{'✓' if same else '✗'} {cert.config.label()}: K = {summary_number(cert.K)}, "
              f"lambda = {summary_number(cert.lam)}")

    best = best_certificate(certs, report.get('run', {}).get('certify', {}).get('objective', 'lambda'))
    rows, worst = run_simulations(spec, lyap, certs, best, sim, output_dir, write_csv=False)
    write_simulation_report(rows, str(Path(output_dir) / 'verification_report.json'),
                            {'mismatches': mismatches, 'worst_ratio': worst, 'simulation': sim})

    if mismatches:
        print(f"\n✗ {mismatches} certificate(s) differ from the report")
        return EXIT_NO_CERTIFICATE
    if best is None or not best.valid or worst > 1 + VERIFY_TOL:
        print(f"\n✗ Verification failed (worst ratio {summary_number(worst)})")
        return EXIT_NO_CERTIFICATE
    print(f"\n✓ Report reproduced; worst ratio {summary_number(worst)}")
    return EXIT_OK


COMMANDS = {
    'synth': cmd_synth,
    'certify': cmd_certify,
    'simulate': cmd_simulate,
    'verify': cmd_verify,
}


def run(argv=None) -> int:
    """Run one command and return its exit code."""
    print("S-GUES Certifier\n" + "=" * 50 + "\n")

    args = parse_arguments(argv)
    env = load_environment()
    config_path = args.config or env['config'] or str(DEFAULT_CONFIG)
    cfg = load_run_config(config_path)
    output_dir = args.output_dir or env['output_dir'] or cfg['output_dir']

    print(f"Configuration:")
    print(f"   Command: {args.command}")
    print(f"   Specification: {args.spec}")
    print(f"   Run defaults: {config_path}")
    print(f"   Output directory: {output_dir}\n")

    Path(output_dir).mkdir(parents=True, exist_ok=True)

    try:
        return COMMANDS[args.command](args, cfg, output_dir)
    except SpecFormatError as e:
        print(f"\nSpecification Error: {e}")
    except ModelError as e:
        print(f"\nModel Error: {e}")
    except LyapunovError as e:
        print(f"\nLyapunov Error: {e}")
    except JumpGraphError as e:
        print(f"\nJump Graph Error: {e}")
    except CertifierError as e:
        print(f"\nCertification Error: {e}")
    except SimulatorError as e:
        print(f"\nSimulation Error: {e}")
    except OutputWriterError as e:
        print(f"\nOutput Writing Error: {e}")
    return EXIT_INPUT_ERROR


def main():
    """Main entry point for the certifier."""
    sys.exit(run())


if __name__ == "__main__":
    main()
