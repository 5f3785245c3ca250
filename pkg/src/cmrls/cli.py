"""Command-line client for the identification service.

Every verb builds an HTTP request against the service API. With --server the
request goes to a running instance; otherwise the app is mounted in-process
over an ASGI transport, so single-machine use needs no daemon. File paths in
requests are resolved locally, which assumes client and server share a
filesystem (the in-process default trivially does).

Exit codes: 0 success, 1 numerical failure during identification, 2 I/O or
configuration errors.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path

import httpx

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_CONFIG = 2


def _load_config_doc(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    doc = json.loads(p.read_text())
    if not isinstance(doc, dict):
        raise ValueError("config root must be a JSON object")
    return doc


async def _post(server: str | None, path: str, payload: dict) -> httpx.Response:
    if server:
        async with httpx.AsyncClient(base_url=server, timeout=600.0) as client:
            return await client.post(path, json=payload)
    from .service import create_app
    transport = httpx.ASGITransport(app=create_app())
    async with httpx.AsyncClient(transport=transport, base_url="http://cmrls.local",
                                 timeout=600.0) as client:
        return await client.post(path, json=payload)


def _call(server: str | None, path: str, payload: dict) -> tuple[int, dict]:
    try:
        resp = asyncio.run(_post(server, path, payload))
    except httpx.HTTPError as err:
        print(f"error: cannot reach server: {err}", file=sys.stderr)
        return EXIT_CONFIG, {}
    try:
        body = resp.json()
    except json.JSONDecodeError:
        body = {"detail": resp.text}
    if resp.status_code == 200:
        return EXIT_OK, body
    detail = body.get("detail", body)
    if resp.status_code == 409:
        msg = detail.get("message", detail) if isinstance(detail, dict) else detail
        step = detail.get("step_index") if isinstance(detail, dict) else None
        where = f" (step {step})" if step is not None else ""
        print(f"error: numerical failure{where}: {msg}", file=sys.stderr)
        return EXIT_NUMERICAL, body
    print(f"error: {detail}", file=sys.stderr)
    return EXIT_CONFIG, body


def _with_seed(doc: dict, seed: int | None) -> dict:
    if seed is None:
        return doc
    out = dict(doc)
    out["seed"] = seed
    return out


def _csv_out(out: str, default_name: str) -> str:
    return out if out.endswith(".csv") else str(Path(out) / default_name)


def cmd_gen_profile(args: argparse.Namespace) -> int:
    doc = _with_seed(_load_config_doc(args.config), args.seed)
    out = _csv_out(args.out, "profile.csv")
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    code, body = _call(args.server, "/v1/gen-profile", {"config": doc, "out_path": out})
    if code == EXIT_OK:
        print(f"wrote {body['rows']} rows to {body['path']}")
    return code


def cmd_simulate(args: argparse.Namespace) -> int:
    doc = _with_seed(_load_config_doc(args.config), args.seed)
    out = _csv_out(args.out, "trace.csv")
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    if not Path(args.profile).is_file():
        print(f"error: profile file not found: {args.profile}", file=sys.stderr)
        return EXIT_CONFIG
    code, body = _call(args.server, "/v1/simulate",
                       {"config": doc, "profile_path": args.profile, "out_path": out})
    if code == EXIT_OK:
        print(f"wrote {body['rows']} rows to {body['path']}")
        if body["soc_outside_soft_bounds"]:
            print(f"warning: soc left [0.05, 0.95] (range {body['soc_min']:.3f}.."
                  f"{body['soc_max']:.3f}); linear-OCV model keeps this well-defined",
                  file=sys.stderr)
    return code


def cmd_identify(args: argparse.Namespace) -> int:
    doc = _with_seed(_load_config_doc(args.config), args.seed)
    if not Path(args.trace).is_file():
        print(f"error: trace file not found: {args.trace}", file=sys.stderr)
        return EXIT_CONFIG
    Path(args.out).mkdir(parents=True, exist_ok=True)
    code, body = _call(args.server, "/v1/identify",
                       {"config": doc, "trace_path": args.trace,
                        "algo": args.algo, "out_dir": args.out})
    if code == EXIT_OK:
        kappa = body["kappa"]
        print(f"{args.algo}: {body['steps']} steps, kappa max {kappa['max']:.3e}"
              + (", exceeded c_upper" if kappa["exceeded_c_upper"] else ""))
        print(f"report: {Path(args.out) / (args.algo + '_report.json')}")
    return code


def cmd_compare(args: argparse.Namespace) -> int:
    doc = _with_seed(_load_config_doc(args.config), args.seed)
    Path(args.out).mkdir(parents=True, exist_ok=True)
    code, body = _call(args.server, "/v1/compare", {"config": doc, "out_dir": args.out})
    if code == EXIT_OK:
        report = body["report"]
        print(f"wrote {len(body['files'])} files to {body['out_dir']}")

        def fmt(x):
            return "n/a" if x is None else f"{x:.3e}"

        for algo, block in sorted(report["algorithms"].items()):
            rec = block["recovery"]
            mae = ", ".join(f"{k}={fmt(rec[k]['mae'])}" for k in ("r0", "tau", "r1", "c1"))
            print(f"  {algo}: kappa_max {block['kappa']['max']:.3e}  MAE {mae}")
        if report.get("soc", {}).get("outside_soft_bounds"):
            soc = report["soc"]
            print(f"warning: soc left [0.05, 0.95] (range {soc['min']:.3f}..{soc['max']:.3f})",
                  file=sys.stderr)
    return code


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app
    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmrls",
        description="Battery parameter identification benchmark (RLS vs condition-memory RLS)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default="out", help="output file or directory")
        p.add_argument("--server", default=None,
                       help="base URL of a running service (default: in-process)")

    p = sub.add_parser("gen-profile", help="generate a random pulse current profile CSV")
    common(p)
    p.set_defaults(func=cmd_gen_profile)

    p = sub.add_parser("simulate", help="simulate the battery over a profile CSV")
    common(p)
    p.add_argument("--profile", required=True, help="input profile CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("identify", help="run one estimator over a measurement CSV")
    common(p)
    p.add_argument("--trace", required=True, help="input measurement CSV")
    p.add_argument("--algo", choices=("rls", "cmrls"), default="cmrls")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("compare", help="full RLS-vs-CMRLS benchmark from a config")
    common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
