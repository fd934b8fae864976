"""``dsb`` command line.

State lives in a data directory: ``journal.jsonl`` records every successful
mutating command as a scenario step, and each invocation replays it on a
fresh network before acting. Store snapshots are rewritten after each
mutation for inspection.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .config import SimulationConfig, load_config
from .connector import discover
from .errors import DsbError, ParseError, SemanticError, SetupError
from .provenance import ProvenanceChain, verify_chain
from .scenario import Runner, load_scenario, run_scenarios, shipped_scenarios
from .semantics import CatalogQuery
from .serial import read_jsonl, to_jsonable, write_jsonl

JOURNAL = "journal.jsonl"
STATE = "state.json"


class Failure(click.ClickException):
    exit_code = 1


class Session:
    def __init__(self, data_dir: Path, config_path: str | None, seed: int | None, as_json: bool):
        self.data_dir = data_dir
        self.as_json = as_json
        stored = {}
        state_file = data_dir / STATE
        if state_file.exists():
            stored = json.loads(state_file.read_text(encoding="utf-8"))
        self.config_path = config_path if config_path is not None else stored.get("config")
        self.seed = seed if seed is not None else stored.get("seed", 0)
        if stored and (self.seed != stored.get("seed") or self.config_path != stored.get("config")):
            raise click.UsageError(
                f"{data_dir} was created with seed={stored.get('seed')} config={stored.get('config')}; use a new --data-dir"
            )
        try:
            self.config: SimulationConfig = load_config(self.config_path)
        except (ParseError, SemanticError) as exc:
            raise click.UsageError(str(exc)) from None
        except OSError as exc:
            raise click.UsageError(f"cannot read config: {exc}") from None
        self._runner: Runner | None = None
        self._journal: list[dict] | None = None

    @property
    def journal(self) -> list[dict]:
        if self._journal is None:
            path = self.data_dir / JOURNAL
            self._journal = [row["step"] for row in read_jsonl(path)] if path.exists() else []
        return self._journal

    @property
    def runner(self) -> Runner:
        if self._runner is None:
            runner = Runner(self.config, self.seed)
            for i, step in enumerate(self.journal):
                try:
                    runner.apply(i, step)
                except SetupError as exc:
                    raise Failure(f"journal replay failed: {exc}") from None
            self._runner = runner
        return self._runner

    def execute(self, step: dict):
        runner = self.runner
        index = len(self.journal)
        try:
            result = runner.apply(index, step)
        except SetupError as exc:
            raise Failure(str(exc)) from None
        self.journal.append(step)
        self.persist()
        return result

    def persist(self) -> None:
        d = self.data_dir
        d.mkdir(parents=True, exist_ok=True)
        (d / STATE).write_text(json.dumps({"config": self.config_path, "seed": self.seed}, sort_keys=True) + "\n")
        write_jsonl(d / JOURNAL, [{"n": i, "step": s} for i, s in enumerate(self.journal)])
        net = self.runner.network
        for sid, space in sorted(net.spaces.items()):
            write_jsonl(d / f"registry_{sid}.jsonl", space.registry.to_records())
            if space.idp is not None:
                write_jsonl(d / f"idp_{sid}.jsonl", space.idp.to_records())
            if space.vdr is not None:
                write_jsonl(d / f"vdr_{sid}.jsonl", space.vdr.to_records())
            write_jsonl(d / f"catalog_{sid}.jsonl", [to_jsonable(r) for r in space.catalog.all()])
            if space.pms is not None:
                write_jsonl(d / f"pms_{sid}.jsonl", [to_jsonable(l) for l in space.pms.query()])
        write_jsonl(d / "contracts.jsonl", [to_jsonable(c) for _, c in sorted(net.contracts.items())])

    def emit(self, payload, text: str) -> None:
        if self.as_json:
            click.echo(json.dumps(to_jsonable(payload), sort_keys=True, indent=2))
        else:
            click.echo(text)


def _data_dir(value: str | None) -> Path:
    return Path(value) if value else Path.cwd() / "dsb-data"


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None, help="Simulation config JSON.")
@click.option("--data-dir", envvar="DSB_DATA_DIR", default=None, help="State directory (env DSB_DATA_DIR).")
@click.option("--seed", type=int, default=None, help="Key-material seed (default 0).")
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
@click.pass_context
def main(ctx: click.Context, config_path, data_dir, seed, as_json):
    """Two-space data exchange simulator."""
    ctx.obj = {"config": config_path, "data_dir": _data_dir(data_dir), "seed": seed, "json": as_json}


def _session(ctx: click.Context) -> Session:
    o = ctx.obj
    return Session(o["data_dir"], o["config"], o["seed"], o["json"])


@main.command()
@click.option("--connector", required=True, help="Local connector handle.")
@click.option("--space", required=True)
@click.option("--participant-id", required=True)
@click.option("--legal-name")
@click.option("--country")
@click.option("--lei")
@click.option("--secret")
@click.option("--endpoint", help="Register a device for this endpoint domain after onboarding.")
@click.pass_context
def onboard(ctx, connector, space, participant_id, legal_name, country, lei, secret, endpoint):
    """Onboard a connector into a space (again, for dual-stack)."""
    s = _session(ctx)
    step = {"op": "onboard", "connector": connector, "space": space, "participant_id": participant_id}
    for key, value in (("legal_name", legal_name), ("country", country), ("lei", lei), ("secret", secret)):
        if value is not None:
            step[key] = value
    pid = s.execute(step)
    device = s.execute({"op": "register_device", "connector": connector, "domain": endpoint, "space": space}) if endpoint else None
    wallet = s.runner.connector(connector).wallet
    s.emit(
        {"participant_id": pid, "space": space, "device_id": device, "dual_stack": wallet.dual_stack},
        f"{pid} Active in {space}" + (f"; device {device}" if device else "") + (" (dual-stack)" if wallet.dual_stack else ""),
    )


@main.command()
@click.option("--connector", required=True)
@click.option("--dataset-id", required=True)
@click.option("--model", "model_id", required=True)
@click.option("--payload", default=None, help="Payload text.")
@click.option("--payload-file", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--theme", multiple=True)
@click.option("--title")
@click.pass_context
def publish(ctx, connector, dataset_id, model_id, payload, payload_file, theme, title):
    """Publish a dataset and its catalog record in the connector's home space."""
    if payload is not None and payload_file is not None:
        raise click.UsageError("give --payload or --payload-file, not both")
    s = _session(ctx)
    step = {"op": "publish", "connector": connector, "dataset_id": dataset_id, "model_id": model_id}
    if payload_file is not None:
        payload = Path(payload_file).read_text(encoding="utf-8")
    if payload is not None:
        step["payload"] = payload
    if theme:
        step["theme"] = list(theme)
    if title:
        step["title"] = title
    s.execute(step)
    record = s.runner.network.space(s.runner.connector(connector).home_space).catalog.get(
        s.runner.connector(connector).participant_id, dataset_id
    )
    s.emit(record, f"published {dataset_id} conforming to {model_id}")


@main.command("discover")
@click.option("--connector", required=True)
@click.option("--theme")
@click.option("--publisher")
@click.option("--model", "model_id")
@click.pass_context
def discover_cmd(ctx, connector, theme, publisher, model_id):
    """Search catalogs from the connector's home space."""
    s = _session(ctx)
    try:
        hits = discover(s.runner.connector(connector), CatalogQuery(theme, publisher, model_id))
    except DsbError as exc:
        raise Failure(f"{exc.code}({exc.detail})") from None
    payload = [{"space": h.source_space, "record": h.record, "warnings": [str(w) for w in h.warnings]} for h in hits]
    lines = [
        f"{h.source_space}\t{h.record.publisher}\t{h.record.record_id}\t{h.record.conforms_to}\t{','.join(map(str, h.warnings))}"
        for h in hits
    ]
    s.emit(payload, "\n".join(lines) if lines else "no matching records")


@main.command()
@click.option("--provider", required=True, help="Provider connector handle or participant id.")
@click.option("--consumer", required=True)
@click.option("--dataset-id", required=True)
@click.option("--mode", type=click.Choice(["auto", "negotiate", "external"]), default="auto")
@click.option("--decline", is_flag=True, help="Consumer declines the offer.")
@click.pass_context
def negotiate(ctx, provider, consumer, dataset_id, mode, decline):
    """Conclude a contract (negotiation API or external broker)."""
    s = _session(ctx)
    step = {"op": "negotiate", "provider": provider, "consumer": consumer, "dataset_id": dataset_id,
            "options": {"contract_mode": mode, "accept": not decline}}
    contract_id = s.execute(step)
    contract = s.runner.network.contracts[contract_id]
    s.emit(contract, f"{contract_id}\t{contract.state.value}")
    if not contract.concluded:
        sys.exit(1)


@main.command()
@click.option("--contract-id", required=True)
@click.option("--ddp", is_flag=True, help="Send a signed data distribution package.")
@click.option("--pms", is_flag=True, help="Forward logs to the provenance service.")
@click.option("--amount", type=click.IntRange(min=0), default=0, help="Record a payment after receipt.")
@click.pass_context
def transfer(ctx, contract_id, ddp, pms, amount):
    """Transfer the dataset of a concluded contract."""
    s = _session(ctx)
    step = {"op": "transfer", "contract_id": contract_id,
            "options": {"use_ddp": ddp, "use_pms": pms, "amount": amount}}
    log_ids = s.execute(step)
    s.emit({"contract_id": contract_id, "logs": log_ids}, "\n".join(log_ids))


@main.command("verify-provenance")
@click.option("--space", help="Space whose provenance service holds the chain.")
@click.option("--dataset-id")
@click.option("--chain-file", type=click.Path(exists=True, dir_okay=False), help="Verify an exported chain JSON instead.")
@click.option("--export", type=click.Path(dir_okay=False), help="Write the rebuilt chain as JSON.")
@click.pass_context
def verify_provenance(ctx, space, dataset_id, chain_file, export):
    """Rebuild and verify a dataset's send/receive chain."""
    s = _session(ctx)
    net = s.runner.network
    if chain_file:
        chain = ProvenanceChain.from_json(json.loads(Path(chain_file).read_text(encoding="utf-8")))
    else:
        if not (space and dataset_id):
            raise click.UsageError("--space and --dataset-id are required without --chain-file")
        pms = net.space(space).pms
        if pms is None:
            raise Failure(f"CapabilityUnavailable({space}:pms)")
        chain = pms.chain(dataset_id)
    try:
        verdict = verify_chain(chain, net.key_of)
    except DsbError as exc:
        verdict = f"{exc.code}({exc.detail})"
    if export:
        Path(export).write_text(json.dumps(chain.to_json(), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    s.emit({"dataset_id": chain.dataset_id, "hops": len(chain.hops), "gaps": list(chain.gaps), "verdict": str(verdict)},
           f"{chain.dataset_id}\thops={len(chain.hops)}\t{verdict}")
    if str(verdict) != "Ok":
        sys.exit(1)


@main.command()
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None, help="Output directory (default <data-dir>/report).")
@click.option("--format", "fmt", type=click.Choice(["csv", "tsv"]), default="csv")
@click.option("--no-figure", is_flag=True)
@click.pass_context
def report(ctx, out_dir, fmt, no_figure):
    """Probe every space and write the gap matrix (table, JSON, figure)."""
    from .gap import gap_report, run_probes

    s = _session(ctx)
    matrix = gap_report(s.config, run_probes(s.config, s.seed))
    out = Path(out_dir) if out_dir else s.data_dir / "report"
    out.mkdir(parents=True, exist_ok=True)
    table = matrix.to_delimited("," if fmt == "csv" else "\t")
    (out / f"gap_matrix.{fmt}").write_text(table, encoding="utf-8")
    (out / "gap_matrix.json").write_text(matrix.dumps() + "\n", encoding="utf-8")
    if not no_figure:
        from .plotting import render_gap_matrix

        render_gap_matrix(matrix, out / "gap_matrix.png")
    if s.as_json:
        click.echo(matrix.dumps())
    else:
        click.echo(table, nl=False)


@main.command("run-scenario")
@click.argument("names", nargs=-1)
@click.option("--all", "run_all", is_flag=True, help="Run every shipped scenario.")
@click.option("--list", "list_only", is_flag=True, help="List shipped scenarios.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None, help="Write one JSON report per scenario.")
@click.option("--workers", type=click.IntRange(min=1), default=1)
@click.pass_context
def run_scenario_cmd(ctx, names, run_all, list_only, out_dir, workers):
    """Run shipped scenarios by id, or scenario files by path."""
    if list_only:
        click.echo("\n".join(shipped_scenarios()))
        return
    if run_all:
        names = tuple(shipped_scenarios()) + names
    if not names:
        raise click.UsageError("name a scenario or pass --all")
    o = ctx.obj
    try:
        config = load_config(o["config"])
        scenarios = [load_scenario(n) for n in names]
    except (ParseError, SemanticError) as exc:
        raise click.UsageError(str(exc)) from None
    try:
        results = run_scenarios(config, scenarios, o["seed"] or 0, workers)
    except SetupError as exc:
        raise Failure(str(exc)) from None
    if out_dir:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        for r in results:
            (Path(out_dir) / f"{r.scenario_id}.json").write_text(r.dumps() + "\n", encoding="utf-8")
    if o["json"]:
        click.echo(json.dumps([r.to_json() for r in results], sort_keys=True, indent=2))
    else:
        for r in results:
            line = f"{'PASS' if r.passed else 'FAIL'}\t{r.scenario_id}"
            failed = r.report.failed_phase if r.report else None
            if failed:
                line += f"\t{failed.phase}:{failed.error}({failed.detail})"
            click.echo(line)
    if not all(r.passed for r in results):
        sys.exit(1)

