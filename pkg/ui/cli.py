"""Command-line interface: the ``bench`` command group."""

import csv
import logging
import sys
from typing import Optional

import click

from models.errors import SiriError
from models.experiment import ENTRY_OVERHEAD, ExperimentConfig, check_structure_params, structure_meta
from models.index import StructureKind
from models.workload_spec import WorkloadSpec
from services.data_manager import DataManager
from services.experiments import HEADERS, run
from services.managers import RootManager
from services.workload import read_records, write_records

log = logging.getLogger(__name__)

STRUCTURE_CHOICES = [k.value for k in StructureKind] + ["all"]

# CLI option name -> ExperimentConfig field, for the multi-valued sweep flags.
SWEEP_FIELDS = {
    "n": "n_values",
    "theta": "thetas",
    "write_ratio": "write_ratios",
    "batch": "batch_sizes",
    "overlap": "overlaps",
    "alpha": "alphas",
    "delta": "deltas",
    "pos_node_size": "pos_node_sizes",
    "mbt_bucket_count": "mbt_bucket_counts",
    "mpt_key_min": "mpt_key_mins",
}

SCALAR_FIELDS = {
    "versions": "versions",
    "groups": "groups",
    "ops": "n_ops",
    "repetitions": "repetitions",
    "readers": "readers",
    "mode": "mode",
    "scenario": "scenario",
    "key_len_min": "key_len_min",
    "key_len_max": "key_len_max",
    "value_len": "value_len_mean",
    "key_charset": "key_charset",
    "mbt_buckets": "mbt_buckets",
    "mbt_fanout": "mbt_fanout",
    "pos_node_bytes": "pos_node_bytes",
    "pos_window": "pos_window",
    "mvmb_order": "mvmb_order",
    "ablate_si": "ablate_si",
    "ablate_ri": "ablate_ri",
}

COMMAND_HELP = {
    "throughput": "Mixed read/write throughput and mean node visits per operation.",
    "latency": "Per-operation latency and path length histograms.",
    "storage": "Total storage of the first v versions under batched updates.",
    "dedup": "Deduplication across groups (overlap, batch) or continuous versions (alpha).",
    "params": "Deduplication as POS node size, MBT bucket count and MPT key length vary.",
    "diffbench": "Diff cost between independently built versions DELTA records apart.",
}


def _structures(values: tuple[str, ...]) -> tuple[StructureKind, ...]:
    if not values or "all" in values:
        return tuple(StructureKind)
    return tuple(dict.fromkeys(StructureKind.parse(v) for v in values))


def structure_options(f):
    """Structure-parameter flags shared by the experiment commands and ingest."""
    options = [
        click.option("--mbt-buckets", type=int, help="MBT bucket count (default 1024)."),
        click.option("--mbt-fanout", type=int, help="MBT internal fanout (default 4)."),
        click.option("--pos-node-bytes", type=int, help="POS expected node size (default 1024)."),
        click.option("--pos-window", type=int, help="POS rolling-hash window (default 67)."),
        click.option("--mvmb-order", type=int, help="MVMB+-Tree order (default: sized for ~1 KiB nodes)."),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def experiment_options(f):
    """Options shared by every experiment command."""
    options = [
        click.option("--structure", "structure", multiple=True, type=click.Choice(STRUCTURE_CHOICES),
                     help="Structure(s) to run; repeatable (default all)."),
        click.option("--n", "n", multiple=True, type=click.IntRange(min=0), help="Record count(s)."),
        click.option("--theta", multiple=True, type=click.FloatRange(min=0.0), help="Zipfian skew value(s)."),
        click.option("--write-ratio", multiple=True, type=click.FloatRange(0.0, 1.0), help="Write ratio(s)."),
        click.option("--batch", multiple=True, type=click.IntRange(min=1), help="Batch size(s)."),
        click.option("--overlap", multiple=True, type=float, help="Group overlap ratio(s)."),
        click.option("--alpha", multiple=True, type=float, help="Changed fraction(s) per version."),
        click.option("--delta", multiple=True, type=click.IntRange(min=0), help="Differing record count(s)."),
        click.option("--pos-node-size", multiple=True, type=int, help="POS node sizes for params."),
        click.option("--mbt-bucket-count", multiple=True, type=int, help="MBT bucket counts for params."),
        click.option("--mpt-key-min", multiple=True, type=int, help="Minimum key lengths for params."),
        click.option("--versions", type=click.IntRange(min=0), help="Number of versions."),
        click.option("--groups", type=click.IntRange(min=1), help="Number of groups for dedup."),
        click.option("--ops", type=click.IntRange(min=0), help="Operations per run."),
        click.option("--repetitions", type=click.IntRange(min=1), help="Timed repetitions (default 5)."),
        click.option("--readers", type=click.IntRange(min=1), help="Reader threads for read operations."),
        click.option("--mode", type=click.Choice(ExperimentConfig.VALID_MODES), help="dedup mode."),
        click.option("--scenario", type=click.Choice(ExperimentConfig.VALID_SCENARIOS),
                     help="alpha-mode change scenario."),
        click.option("--key-len-min", type=click.IntRange(min=1), help="Minimum key length."),
        click.option("--key-len-max", type=click.IntRange(min=1), help="Maximum key length."),
        click.option("--value-len", type=click.IntRange(min=1), help="Mean value length."),
        click.option("--key-charset", type=click.Choice(WorkloadSpec.VALID_CHARSETS), help="Key alphabet."),
        click.option("--ablate-si", is_flag=True, default=None, help="POS with position-dependent splits."),
        click.option("--ablate-ri", is_flag=True, default=None, help="Copy every node on each write."),
        click.option("--seed", type=int, help="Workload seed; overrides the group option."),
        click.option("--out", type=click.Path(dir_okay=False, writable=True, allow_dash=True), default="-",
                     help="CSV output file (default stdout)."),
    ]
    f = structure_options(f)
    for option in reversed(options):
        f = option(f)
    return f


def build_config(subcommand: str, seed: int, params: dict) -> ExperimentConfig:
    """Translate parsed CLI parameters into an ExperimentConfig; unset flags keep defaults."""
    kwargs: dict = {"subcommand": subcommand, "seed": seed}
    kwargs["structures"] = _structures(params.get("structure", ()))
    for name, field in SWEEP_FIELDS.items():
        if params.get(name):
            kwargs[field] = tuple(params[name])
    for name, field in SCALAR_FIELDS.items():
        if params.get(name) is not None:
            kwargs[field] = params[name]
    return ExperimentConfig(**kwargs)


def write_csv(path: str, header: list[str], rows: list[dict]) -> None:
    with click.open_file(path, "w") as fh:
        writer = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


@click.group()
@click.option("--seed", type=int, default=42, envvar="SIRI_SEED", show_default=True,
              help="Workload seed (falls back to $SIRI_SEED).")
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
              default="WARNING", show_default=True)
@click.pass_context
def bench(ctx: click.Context, seed: int, log_level: str):
    """Benchmarks and tools for tamper-evident immutable indexes."""
    logging.basicConfig(
        level=log_level.upper(),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    ctx.ensure_object(dict)
    ctx.obj["seed"] = seed


def _experiment_command(subcommand: str):
    @click.pass_context
    def command(ctx: click.Context, out: str, seed: Optional[int], **params):
        try:
            cfg = build_config(subcommand, ctx.obj["seed"] if seed is None else seed, params)
            log.info("running %s with %s", subcommand, cfg.to_dict())
            rows = run(cfg)
        except (SiriError, ValueError) as e:
            raise click.ClickException(str(e)) from e
        write_csv(out, HEADERS[subcommand], rows)

    command.__doc__ = COMMAND_HELP[subcommand]
    return bench.command(subcommand)(experiment_options(command))


for _name in ExperimentConfig.VALID_SUBCOMMANDS:
    _experiment_command(_name)


@bench.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--structure", required=True, type=click.Choice([k.value for k in StructureKind]))
@click.option("--name", required=True, help="Catalog name for the new root.")
@click.option("--data-dir", default="data", show_default=True, type=click.Path(file_okay=False))
@structure_options
def ingest(input_path: str, structure: str, name: str, data_dir: str, **params):
    """Build an index from a key<TAB>base64 record file and save its root."""
    try:
        kind = StructureKind.parse(structure)
        check_structure_params((kind,), params)
        entries = read_records(input_path)
        latest = {e.key: e for e in entries}
        manager = RootManager(DataManager(data_dir))
        records = list(latest.values())
        mean_entry = sum(len(e.key) + len(e.value) for e in records) / max(1, len(records)) + ENTRY_OVERHEAD
        meta = structure_meta(kind, mean_entry_bytes=mean_entry, **params)
        index = manager.indexes.get(kind, meta)
        handle = index.put_batch(index.empty(), records)
        manager.add(name, handle)
    except (SiriError, ValueError) as e:
        raise click.ClickException(str(e)) from e
    click.echo(f"{name}: {len(latest)} records, {handle}")


@bench.command()
@click.option("--name", required=True)
@click.option("--output", required=True, type=click.Path(dir_okay=False, writable=True))
@click.option("--data-dir", default="data", show_default=True, type=click.Path(file_okay=False))
def export(name: str, output: str, data_dir: str):
    """Write every record of a saved root to a key<TAB>base64 file."""
    try:
        manager = RootManager(DataManager(data_dir))
        handle = manager.require(name)
        entries = manager.indexes.for_root(handle).entries(handle)
        write_records(output, entries)
    except (SiriError, ValueError) as e:
        raise click.ClickException(str(e)) from e
    click.echo(f"{name}: wrote {len(entries)} records to {output}")


@bench.command()
@click.option("--data-dir", default="data", show_default=True, type=click.Path(file_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=5001, show_default=True, type=int)
@click.option("--debug/--no-debug", default=False)
def serve(data_dir: str, host: str, port: int, debug: bool):
    """Serve the inspection API over a saved workspace."""
    from api.app import run_server

    try:
        run_server(DataManager(data_dir), host=host, port=port, debug=debug)
    except SiriError as e:
        raise click.ClickException(str(e)) from e
