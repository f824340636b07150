"""
Command-line experiment harness.

Every subcommand is seeded and writes one report (JSON or CSV) that embeds
its own config; ``qmoney --replay REPORT`` re-runs that config and checks
the bytes match. Trial i of any experiment uses seed XOR i (i >= 1); index
0 is reserved for setup such as sampling the coin state.

Exit codes: 0 success, 2 validation error, 3 experiment failure or replay
mismatch.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import bills as bl
from . import blindverify as bv
from . import coin as cn
from . import forgery as fg
from .errors import ParameterError, QMoneyError
from .qstate import MAX_QUBITS, SEED_MAX, derive_seed, fidelity, haar_random_state, perturb

EXIT_OK, EXIT_VALIDATION, EXIT_FAILURE = 0, 2, 3

# flags that name output files; never part of the embedded config
_OUTPUT_KEYS = {"out", "plot", "record", "replay", "save_scheme", "valid_list_out", "command"}


@dataclass
class Report:
    records: list[dict]
    summary: dict
    transcript: str | None = None
    figure: tuple | None = None
    extras: dict = field(default_factory=dict)


# --- validation helpers ----------------------------------------------------

def _positive(name, value, upper=None):
    if value < 1 or (upper is not None and value > upper):
        bound = f"[1, {upper}]" if upper is not None else ">= 1"
        raise ParameterError(f"--{name.replace('_', '-')} must be {bound}, got {value}")
    return value


def _unit(name, value, open_low=False):
    if not (0.0 < value <= 1.0 if open_low else 0.0 <= value <= 1.0):
        interval = "(0, 1]" if open_low else "[0, 1]"
        raise ParameterError(f"--{name} must lie in {interval}, got {value}")
    return value


def parse_int_list(text: str) -> list[int]:
    """'4:10' (inclusive), '0,1,2' or a single integer."""
    try:
        if ":" in text:
            lo, hi = (int(x) for x in text.split(":"))
            if hi < lo:
                raise ParameterError(f"empty range {text!r}")
            return list(range(lo, hi + 1))
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ParameterError(f"cannot parse integer list {text!r}") from exc


def _psi_listing(psi):
    return [[float(a.real), float(a.imag)] for a in psi.amplitudes]


# --- handlers --------------------------------------------------------------

def cmd_mint_verify(c, outputs):
    n = _positive("n", c["n"], MAX_QUBITS)
    trials = _positive("trials", c["trials"])
    cap = c["poly_cap"] if c["poly_cap"] is not None else max(n**3, trials)
    scheme = cn.new_scheme(n, derive_seed(c["seed"], 0), poly_cap=cap)
    oracle = scheme.oracle()
    records = []
    for i in range(1, trials + 1):
        coin = scheme.mint()
        res = cn.verify(oracle, coin.state, derive_seed(c["seed"], i))
        records.append({"trial": i, "accepted": int(res.accepted),
                        "post_fidelity": fidelity(res.post_state, scheme.psi)})
    summary = {"accept_rate": sum(r["accepted"] for r in records) / trials,
               "issued": scheme.issued_count, "poly_cap": cap, "oracle_queries": oracle.queries}
    if c["reveal_secret"]:
        summary["psi"] = _psi_listing(scheme.psi)
    if outputs.get("save_scheme"):
        with open(outputs["save_scheme"], "wb") as fh:
            fh.write(cn.scheme_to_bytes(scheme))
    return Report(records, summary)


def cmd_transfer_chain(c, outputs):
    n = _positive("n", c["n"], MAX_QUBITS)
    rounds = _positive("rounds", c["rounds"])
    eps = _unit("epsilon", c["epsilon"])
    scheme = cn.new_scheme(n, derive_seed(c["seed"], 0))
    coin = scheme.mint()
    if eps > 0:
        coin.state = perturb(coin.state, eps, derive_seed(c["seed"], 1))
    report = cn.transfer_chain(scheme, coin, rounds, derive_seed(c["seed"], 2))
    records = [{"round": i + 1, "accepted": int(a)} for i, a in enumerate(report.accepted)]
    first = next((i for i, a in enumerate(report.accepted) if a), None)
    summary = {
        "accept_count": report.accept_count,
        "final_fidelity": report.final_fidelity,
        "first_accept_round": None if first is None else first + 1,
        "all_accept_after_first": first is not None and all(report.accepted[first:]),
    }
    return Report(records, summary)


def cmd_robustness(c, outputs):
    n = _positive("n", c["n"], MAX_QUBITS)
    trials = _positive("trials", c["trials"])
    eps = _unit("epsilon", c["epsilon"])
    scheme = cn.new_scheme(n, derive_seed(c["seed"], 0), poly_cap=trials)
    r = cn.robustness_experiment(scheme, eps, trials, c["seed"])
    row = {"n": n, "epsilon": eps, "trials": trials, "passes": r.passes, "pass_rate": r.pass_rate,
           "mean_post_fidelity_given_pass": r.mean_post_fidelity_given_pass,
           "min_post_fidelity_given_pass": r.min_post_fidelity_given_pass}
    return Report([row], dict(row))


def cmd_anonymity(c, outputs):
    users = c["users"]
    if users < 2:
        raise ParameterError("--users must be at least 2")
    r = cn.anonymity_experiment(not c["cheating"], users, c["seed"], n=c["n"],
                                trials=_positive("trials", c["trials"]))
    row = {"honest": int(r.honest), "users": users, "n": r.n, "trials": r.trials,
           "correct": r.correct, "accuracy": r.accuracy, "chance": 1 / users}
    return Report([row], {**row, "strategy": r.strategy})


def cmd_forge_retry(c, outputs):
    n = _positive("n", c["n"], MAX_QUBITS)
    runs = _positive("trials", c["trials"])
    max_tries = _positive("max_tries", c["max_tries"])
    scheme = cn.CoinScheme(n, haar_random_state(n, derive_seed(c["seed"], 0)))
    records, tries = [], []
    for i in range(1, runs + 1):
        s = derive_seed(c["seed"], i)
        attempt = fg.retry_forger(scheme.oracle(), n, s, max_tries)
        rep = fg.judge(scheme, attempt, seed=s)
        tries.append(attempt.tries)
        records.append({"n": n, "k": 0, "p": 1.0, "queries": rep.queries,
                        "overlap": rep.achieved_overlap, "succeeded": int(rep.succeeded), "seed": s})
    tries = np.array(tries)
    summary = {"mean_tries": float(tries.mean()), "expected_tries": 2.0**n,
               "std_error": float(tries.std(ddof=1) / math.sqrt(runs)) if runs > 1 else None,
               "failures": int(sum(1 - r["succeeded"] for r in records))}
    if runs >= 50:
        chi2, pval, dof = fg.geometric_chi_square(tries, 2.0**-n)
        summary.update(chi2=chi2, chi2_p_value=pval, chi2_dof=dof)
    return Report(records, summary, figure=("retry", tries.tolist(), n))


def cmd_forge_grover(c, outputs):
    n = _positive("n", c["n"], MAX_QUBITS)
    p = _unit("p", c["p"], open_low=True)
    k = c["k"]
    if k < 0:
        raise ParameterError("--k must be nonnegative")
    seed0 = derive_seed(c["seed"], 0)
    if c["instance"] == "typical":
        scheme = fg.search_instance(n, seed0)
        scheme.poly_cap = max(scheme.poly_cap, k)
    else:
        scheme = cn.new_scheme(n, seed0, poly_cap=max(n**3, k))
    if k:
        rep = fg.forge_with_coins(scheme, k, p, c["seed"])
        predicted = fg.grover_closed_form(n, rep.queries)
    else:
        attempt = fg.grover_forger(scheme.oracle(), n, p)
        rep = fg.judge(scheme, attempt, k=0, p=p, seed=c["seed"])
        predicted = attempt.predicted_overlap
    row = {"n": n, "k": k, "p": p, "queries": rep.queries, "overlap": rep.achieved_overlap,
           "succeeded": int(rep.succeeded), "seed": c["seed"]}
    summary = {**row, "predicted_overlap": predicted,
               "bound": fg.theoretical_bound(fg.ForgeBoundParams(n, k, p)),
               "bound_label": fg.BOUND_LABEL}
    return Report([row], summary)


def cmd_bound_table(c, outputs):
    ns, ks = parse_int_list(c["n_range"]), parse_int_list(c["k_range"])
    p = _unit("p", c["p"], open_low=True)
    if not ns or not ks or min(ns) < 1 or min(ks) < 0:
        raise ParameterError("n values must be >= 1 and k values >= 0")
    rows = [{"n": n, "k": k, "p": p, "bound": fg.theoretical_bound(fg.ForgeBoundParams(n, k, p))}
            for n in ns for k in ks]
    summary = {"label": fg.BOUND_LABEL, "k_convention": fg.BOUND_K_CONVENTION}
    return Report(rows, summary, figure=("bound", rows),
                  extras={"header": [f"k-convention: {fg.BOUND_K_CONVENTION}",
                                     f"values: {fg.BOUND_LABEL}"]})


def cmd_scaling(c, outputs):
    ns = parse_int_list(c["n_range"])
    if not ns or min(ns) < 1 or max(ns) > MAX_QUBITS:
        raise ParameterError(f"n values must lie in [1, {MAX_QUBITS}]")
    p = _unit("p", c["p"], open_low=True)
    rows = [vars(r) for r in fg.query_scaling_experiment(ns, p, c["seed"])]
    ratios = [r["ratio"] for r in rows if r["queries"] > 0]
    summary = {"ratio_min": min(ratios, default=None), "ratio_max": max(ratios, default=None),
               "bound_label": fg.BOUND_LABEL}
    return Report(rows, summary, figure=("scaling", rows))


def cmd_bb84_attack(c, outputs):
    n = _positive("n", c["n"], MAX_QUBITS)
    copies = c["copies"]
    trials = _positive("trials", c["trials"])
    forged = _positive("forged", c["forged"])
    fg.bb84_split(copies, c["split"])
    records = []
    for i in range(1, trials + 1):
        s = derive_seed(c["seed"], i)
        spec = fg.random_bb84_spec(n, np.random.default_rng([s, 0]))
        r = fg.bb84_attack(spec, copies, s, forged=forged, split=c["split"])
        records.append({"trial": i, "success": int(r.success), "forged_pass_rate": r.forged_pass_rate,
                        "basis_errors": r.basis_errors, "bit_errors": r.bit_errors})
    summary = {"success_rate": sum(r["success"] for r in records) / trials,
               "forged_pass_rate": sum(r["forged_pass_rate"] for r in records) / trials,
               "basis_error_rate": sum(r["basis_errors"] for r in records) / (trials * n),
               "split": c["split"], "comp_copies": fg.bb84_split(copies, c["split"])}
    return Report(records, summary)


def _bill_scheme(c):
    return bl.new_bill_scheme(c["m"], c["t"], derive_seed(c["seed"], 0), exact=not c["windowed"])


def cmd_bills_mint(c, outputs):
    scheme = _bill_scheme(c)
    count = _positive("count", c["count"])
    records = []
    for i in range(1, count + 1):
        bill = bl.mint_bill(scheme, derive_seed(c["seed"], i))
        records.append({"bill": i, "k": bill.k,
                        "eigenstate_fidelity": fidelity(bill.state, bl.eigenstate(scheme, bill.k))})
    if outputs.get("valid_list_out"):
        with open(outputs["valid_list_out"], "w") as fh:
            fh.write(scheme.export_valid_list())
    summary = {"valid_list": sorted(scheme.valid_list), "m": scheme.m, "t": scheme.t, "w": scheme.w}
    return Report(records, summary)


def cmd_bills_verify(c, outputs):
    scheme = _bill_scheme(c)
    count = _positive("count", c["count"])
    records = []
    for i in range(1, count + 1):
        s = derive_seed(c["seed"], i)
        bill = bl.mint_bill(scheme, np.random.default_rng([s, 0]))
        ok, post = bl.verify_bill(scheme, bill, np.random.default_rng([s, 1]))
        tampered = bl.Bill((bill.k + 1) % scheme.m, bill.state.copy())
        bad, _ = bl.verify_bill(scheme, tampered, np.random.default_rng([s, 2]))
        records.append({"bill": i, "k": bill.k, "accepted": int(ok), "tampered_accepted": int(bad),
                        "post_fidelity": fidelity(post.state, bl.eigenstate(scheme, bill.k))})
    summary = {"accept_rate": sum(r["accepted"] for r in records) / count,
               "tampered_accept_rate": sum(r["tampered_accepted"] for r in records) / count}
    return Report(records, summary)


def cmd_bills_forge(c, outputs):
    scheme = _bill_scheme(c)
    trials = _positive("trials", c["trials"])
    for i in range(_positive("mints", c["mints"])):
        bl.mint_bill(scheme, np.random.default_rng([c["seed"], 0, i]))
    target = c["target_k"] if c["target_k"] is not None else sorted(scheme.valid_list)[0]
    if not 0 <= target < scheme.m:
        raise ParameterError(f"--target-k must lie in [0, {scheme.m})")
    rep = bl.forge_bill_attempt(bl.BillVerifier(scheme), target, trials, c["seed"])
    cosets = scheme.group_order // scheme.m
    row = {"target_k": target, "trials": trials, "passes": rep.passes, "pass_rate": rep.pass_rate,
           "on_list": int(target in scheme.valid_list),
           "expected_haar_rate": cosets / 2**scheme.w if target in scheme.valid_list else 0.0}
    return Report([row], dict(row))


def _protocol_inputs(c):
    n = _positive("n", c["n"], MAX_QUBITS)
    runs = _positive("runs", c["runs"])
    scheme = cn.new_scheme(n, derive_seed(c["seed"], 0), poly_cap=max(n**3, runs))
    kinds = ["valid", "perturbed", "random"] if c["mix"] == "mixed" else ["valid"]
    for i in range(1, runs + 1):
        s = derive_seed(c["seed"], i)
        kind = kinds[(i - 1) % len(kinds)]
        if kind == "valid":
            state = scheme.mint().state
        elif kind == "perturbed":
            state = perturb(scheme.psi, c["epsilon"], np.random.default_rng([s, 7]))
        else:
            state = haar_random_state(n, np.random.default_rng([s, 8]))
        yield scheme, i, s, kind, state


def _run_protocol(c, runner):
    _unit("epsilon", c["epsilon"])
    records, transcripts = [], []
    for scheme, i, s, kind, state in _protocol_inputs(c):
        res = runner(bv.Bank(scheme), bv.Merchant(cn.Coin(state)), bv.Channel(), s)
        g = res.transcript.bank_gate_count
        records.append({"run": i, "input": kind, "accepted": int(res.accepted),
                        "final_fidelity": fidelity(res.coin, scheme.psi),
                        "bank_x": g.x_gates, "bank_z": g.z_gates, "bank_other": g.other_gates})
        transcripts.append(res.transcript.serialize())
    summary = {"accept_rate": sum(r["accepted"] for r in records) / len(records),
               "max_bank_x": max(r["bank_x"] for r in records),
               "max_bank_z": max(r["bank_z"] for r in records)}
    return Report(records, summary, transcript="".join(transcripts))


def cmd_online_verify(c, outputs):
    return _run_protocol(c, bv.run_online_verification)


def cmd_blind_verify(c, outputs):
    return _run_protocol(c, bv.run_blind_verification)


def cmd_blindness_check(c, outputs):
    n = c["n"]
    if not 1 <= n <= 3:
        raise ParameterError("--n must lie in [1, 3] for exact pad averaging")
    if c["runs"] < 0:
        raise ParameterError("--runs must be nonnegative")
    a = cn.new_scheme(n, derive_seed(c["seed"], 0))
    b = cn.new_scheme(n, np.random.default_rng([c["seed"], 1]))
    rep = bv.blindness_check(a, b, c["runs"], c["seed"])
    rows = [vars(r) for r in rep.rows]
    summary = {"runs": rep.runs, "max_distance_between": rep.max_distance_between,
               "max_distance_to_mixed": rep.max_distance_to_mixed}
    return Report(rows, summary)


def cmd_workload(c, outputs):
    online, blind = [], []
    for scheme, i, s, kind, state in _protocol_inputs(c):
        online.append(bv.run_online_verification(bv.Bank(scheme), bv.Merchant(cn.Coin(state.copy())),
                                                 bv.Channel(), s).transcript)
        blind.append(bv.run_blind_verification(bv.Bank(scheme), bv.Merchant(cn.Coin(state)),
                                               bv.Channel(), s).transcript)
    rows = []
    for r in bv.compare_bank_workload(online, blind, c["n"]):
        d = vars(r)
        d["bank_total"] = r.bank_total
        rows.append(d)
    return Report(rows, {"final_step_budget": 2 * c["n"]})


HANDLERS = {
    "mint-verify": cmd_mint_verify,
    "transfer-chain": cmd_transfer_chain,
    "robustness": cmd_robustness,
    "anonymity": cmd_anonymity,
    "forge-retry": cmd_forge_retry,
    "forge-grover": cmd_forge_grover,
    "bound-table": cmd_bound_table,
    "scaling": cmd_scaling,
    "bb84-attack": cmd_bb84_attack,
    "bills-mint": cmd_bills_mint,
    "bills-verify": cmd_bills_verify,
    "bills-forge": cmd_bills_forge,
    "online-verify": cmd_online_verify,
    "blind-verify": cmd_blind_verify,
    "blindness-check": cmd_blindness_check,
    "workload": cmd_workload,
}


# --- parser ----------------------------------------------------------------

def _seed(text):
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}")
    if not 0 <= value <= SEED_MAX:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed, default=0)
    common.add_argument("--out", help="report path (default: stdout)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--reveal-secret", action="store_true",
                        help="include the coin state in reports that have one")
    common.add_argument("--plot", help="also render a figure (scaling, bound-table, forge-retry)")

    parser = argparse.ArgumentParser(prog="qmoney", description=__doc__.split("\n\n")[0])
    parser.add_argument("--replay", metavar="FILE",
                        help="re-run the config embedded in a report or transcript and compare bytes")
    sub = parser.add_subparsers(dest="command")

    def add(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    p = add("mint-verify", help="mint coins and run the verification circuit")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--poly-cap", type=int, default=None)
    p.add_argument("--save-scheme", help="write the (secret) scheme fixture here")

    p = add("transfer-chain", help="verify one coin repeatedly")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--rounds", type=int, default=1000)
    p.add_argument("--epsilon", type=float, default=0.0)

    p = add("robustness", help="perturb, verify, measure post-pass fidelity")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--trials", type=int, default=10_000)

    p = add("anonymity", help="spender identification by an honest or cheating bank")
    p.add_argument("--users", type=int, default=4)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--cheating", action="store_true")

    p = add("forge-retry", help="measure-and-retry forger")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--max-tries", type=int, default=10**6)

    p = add("forge-grover", help="amplitude-amplification forger")
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--k", type=int, default=0)
    p.add_argument("--instance", choices=("haar", "typical"), default="haar")

    p = add("bound-table", help="grid of query lower-bound values")
    p.add_argument("--n-range", default="1:20")
    p.add_argument("--k-range", default="0,1,2,4,8,16")
    p.add_argument("--p", type=float, default=1.0)

    p = add("scaling", help="forger queries against sqrt(2^n)")
    p.add_argument("--n-range", default="1:10")
    p.add_argument("--p", type=float, default=0.5)

    p = add("bb84-attack", help="recover a BB84-encoded coin from a few copies")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--copies", type=int, default=16)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--forged", type=int, default=32)
    p.add_argument("--split", choices=("skewed", "balanced"), default="skewed")

    for name, helptext in (("bills-mint", "mint quantum bills by phase estimation"),
                           ("bills-verify", "verify genuine and tampered bills"),
                           ("bills-forge", "submit random states as bills")):
        p = add(name, help=helptext)
        p.add_argument("--m", type=int, default=8)
        p.add_argument("--t", type=int, default=3)
        p.add_argument("--windowed", action="store_true", help="non-exact mode for general m")
        if name == "bills-forge":
            p.add_argument("--trials", type=int, default=2000)
            p.add_argument("--mints", type=int, default=4)
            p.add_argument("--target-k", type=int, default=None)
        else:
            p.add_argument("--count", type=int, default=100)
        if name == "bills-mint":
            p.add_argument("--valid-list-out", help="write the published list of k here")

    for name in ("online-verify", "blind-verify", "workload"):
        p = add(name, help=f"{name.split('-')[0]} bank/merchant verification protocol"
                if name != "workload" else "bank workload, online vs blind")
        p.add_argument("--n", type=int, default=3)
        p.add_argument("--runs", type=int, default=20)
        p.add_argument("--epsilon", type=float, default=0.3)
        p.add_argument("--mix", choices=("valid", "mixed"), default="mixed")
        if name != "workload":
            p.add_argument("--record", help="write the protocol transcripts here")

    p = add("blindness-check", help="exact pad-averaged views of protocol payloads")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--runs", type=int, default=1)
    return parser


def config_from_args(args: argparse.Namespace) -> dict:
    c = {k: v for k, v in vars(args).items() if k not in _OUTPUT_KEYS}
    c["command"] = args.command
    return c


# --- rendering -------------------------------------------------------------

def _jsonable(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return _jsonable(obj)


def _config_line(config: dict) -> str:
    return json.dumps(_clean(config), sort_keys=True)


def render(report: Report, config: dict) -> str:
    if config["format"] == "json":
        doc = {"config": _clean(config), "records": _clean(report.records),
               "summary": _clean(report.summary)}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    buf.write(f"# config: {_config_line(config)}\n")
    for line in report.extras.get("header", []):
        buf.write(f"# {line}\n")
    if report.records:
        writer = csv.DictWriter(buf, fieldnames=list(report.records[0]), lineterminator="\n")
        writer.writeheader()
        for row in _clean(report.records):
            writer.writerow({k: "" if v is None else v for k, v in row.items()})
    buf.write(f"# summary: {json.dumps(_clean(report.summary), sort_keys=True)}\n")
    return buf.getvalue()


def render_transcript(report: Report, config: dict) -> str:
    return f"# config: {_config_line(config)}\n" + (report.transcript or "")


def execute(config: dict, outputs: dict | None = None) -> Report:
    handler = HANDLERS.get(config.get("command"))
    if handler is None:
        raise ParameterError(f"unknown subcommand {config.get('command')!r}")
    return handler(config, outputs or {})


def _embedded_config(text: str) -> dict:
    first = text.split("\n", 1)[0]
    if first.startswith("# config: "):
        return json.loads(first[len("# config: "):])
    return json.loads(text)["config"]


def replay(path: str) -> int:
    with open(path) as fh:
        text = fh.read()
    try:
        config = _embedded_config(text)
    except (ValueError, KeyError) as exc:
        print(f"qmoney: no embedded config in {path}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    report = execute(config)
    candidates = [render(report, config)]
    if report.transcript is not None:
        candidates.append(render_transcript(report, config))
    if text in candidates:
        print(f"replay identical: {path}")
        return EXIT_OK
    print(f"replay MISMATCH: {path}", file=sys.stderr)
    return EXIT_FAILURE


def _check_writable(path: str | None):
    if path is None:
        return
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent) or not os.access(parent, os.W_OK):
        raise ParameterError(f"output path {path!r} is not writable")


def _write_figure(report: Report, path: str):
    from . import figures

    kind = report.figure[0]
    if kind == "scaling":
        figures.plot_scaling(report.figure[1], path)
    elif kind == "bound":
        figures.plot_bound_table(report.figure[1], path)
    elif kind == "retry":
        figures.plot_retry(report.figure[1], report.figure[2], path)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.replay:
            if args.command:
                raise ParameterError("--replay takes no subcommand")
            return replay(args.replay)
        if not args.command:
            parser.print_usage(sys.stderr)
            return EXIT_VALIDATION
        outputs = {k: getattr(args, k, None) for k in _OUTPUT_KEYS - {"command", "replay"}}
        for path in outputs.values():
            _check_writable(path)
        if outputs["plot"] and (args.command not in ("scaling", "bound-table", "forge-retry")):
            raise ParameterError("--plot is available for scaling, bound-table and forge-retry")
        config = config_from_args(args)
        report = execute(config, outputs)
    except ParameterError as exc:
        print(f"qmoney: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except QMoneyError as exc:
        print(f"qmoney: experiment failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE

    text = render(report, config)
    if outputs["out"]:
        with open(outputs["out"], "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if outputs.get("record"):
        with open(outputs["record"], "w") as fh:
            fh.write(render_transcript(report, config))
    if outputs["plot"]:
        _write_figure(report, outputs["plot"])
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
