"""Transaction ingestion, fraud synthesis and experiment dataset assembly."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import CardPatternError, Label, Transaction, TransactionSequence

log = logging.getLogger(__name__)

DEFAULT_AMOUNT_COLUMN = "Transaction Amount"
DEFAULT_REGION_COLUMN = "Vendor State/Province"
BUNDLE_HEADER = ["dataset_id", "kind", "index", "amount", "region", "split"]
BUNDLE_VERSION = "# cardpattern-bundle v1"


class MissingColumn(CardPatternError):
    pass


class UnreadableFile(CardPatternError):
    pass


class EmptyAfterFiltering(CardPatternError):
    pass


class RejectionOverflow(CardPatternError):
    pass


class InsufficientLegitimateData(CardPatternError):
    pass


class MalformedBundle(CardPatternError):
    pass


@dataclass(frozen=True)
class IngestionReport:
    rows_read: int
    rows_dropped: int
    region_map: dict

    def summary(self) -> str:
        return (f"rows_read={self.rows_read} rows_dropped={self.rows_dropped} "
                f"regions={len(self.region_map)}")


@dataclass(frozen=True)
class FraudGenConfig:
    amount_mean: float
    amount_std: float
    block_len: int = 5
    seed: int = 0
    dist: str = "truncnorm"

    def __post_init__(self):
        if not self.amount_std > 0:
            raise ValueError("amount_std must be positive")
        if self.block_len < 1:
            raise ValueError("block_len must be >= 1")
        if self.dist not in ("truncnorm", "lognormal"):
            raise ValueError(f"unknown fraud distribution {self.dist!r}")


@dataclass(frozen=True)
class Dataset:
    dataset_id: int
    kind: Label
    train: TransactionSequence
    test: TransactionSequence

    @property
    def sequence(self) -> TransactionSequence:
        txs = list(self.train.transactions) + list(self.test.transactions)
        return TransactionSequence.from_columns([t.amount for t in txs], [t.region for t in txs], self.kind)

    @property
    def train_len(self) -> int:
        return len(self.train)


@dataclass(frozen=True)
class ExperimentSet:
    datasets_L: tuple
    datasets_F: tuple
    train_len: int = 100
    block_len: int = 5

    def __iter__(self):
        yield from self.datasets_L
        yield from self.datasets_F


def _parse_amount(text: str) -> Optional[float]:
    s = text.strip().replace("$", "").replace(",", "")
    if s.startswith("(") and s.endswith(")"):
        s = "-" + s[1:-1]
    try:
        v = float(s)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def ingest_csv(path, amount_column: str = DEFAULT_AMOUNT_COLUMN,
               region_column: str = DEFAULT_REGION_COLUMN):
    """Read one transaction per valid row, in file order.

    Rows with a non-positive or unparsable amount, or an empty region, are
    dropped (with a warning). Region strings get ids 1, 2, ... by first
    appearance.
    """
    try:
        fh = open(path, newline="", encoding="utf-8-sig")
    except OSError as exc:
        raise UnreadableFile(f"{path}: {exc.strerror or exc}") from None
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (amount_column, region_column):
            if col not in header:
                raise MissingColumn(f"column {col!r} not found in {path}")
        amounts, regions = [], []
        region_map: dict = {}
        read = dropped = 0
        try:
            for row in reader:
                read += 1
                amount = _parse_amount(row.get(amount_column) or "")
                region = (row.get(region_column) or "").strip()
                if amount is None or amount <= 0 or not region:
                    dropped += 1
                    continue
                if region not in region_map:
                    region_map[region] = len(region_map) + 1
                amounts.append(amount)
                regions.append(region_map[region])
        except (csv.Error, UnicodeDecodeError) as exc:
            raise UnreadableFile(f"{path}: {exc}") from None
    if dropped:
        log.warning("dropped %d of %d rows with non-positive amount or missing region", dropped, read)
    if not amounts:
        raise EmptyAfterFiltering(f"no usable rows in {path}")
    return (TransactionSequence.from_columns(amounts, regions),
            IngestionReport(read, dropped, region_map))


def sample_csv_path() -> Path:
    """Path of the frozen sample extract shipped with the package."""
    return Path(str(resources.files("cardpattern") / "sample" / "purchases.csv"))


def default_fraud_config(legit: TransactionSequence, train_len: int = 100, block_len: int = 5,
                         seed: int = 0, dist: str = "truncnorm", mean_factor: float = 3.0,
                         std_factor: float = 1.0) -> FraudGenConfig:
    """Fraud amounts at 3x the legitimate mean with the legitimate spread."""
    a = legit.amounts[:train_len]
    return FraudGenConfig(mean_factor * float(a.mean()), std_factor * float(a.std()), block_len, seed, dist)


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Independent generator for block `block`; stable under adding blocks."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def gen_fraud_block(config: FraudGenConfig, legit_regions: Sequence[int], rng: np.random.Generator):
    """Synthesize `block_len` fraudulent (amount, region) pairs.

    Amounts come from a normal truncated at zero by rejection (or a
    lognormal with matching moments); regions are the head of a random
    permutation of the legitimate region multiset.
    """
    pool = np.asarray(list(legit_regions), dtype=int)
    if pool.size == 0:
        raise ValueError("legitimate region multiset is empty")
    amounts = []
    if config.dist == "lognormal":
        s2 = math.log1p((config.amount_std / config.amount_mean) ** 2)
        mu = math.log(config.amount_mean) - s2 / 2
        amounts = [float(v) for v in rng.lognormal(mu, math.sqrt(s2), config.block_len)]
    else:
        while len(amounts) < config.block_len:
            for _ in range(1000):
                v = float(rng.normal(config.amount_mean, config.amount_std))
                if v > 0:
                    amounts.append(v)
                    break
            else:
                raise RejectionOverflow("1000 consecutive non-positive amount draws")
    regions = []
    while len(regions) < config.block_len:
        regions.extend(int(r) for r in rng.permutation(pool))
    return list(zip(amounts, regions[:config.block_len]))


def _seq(pairs, label=Label.LEGITIMATE):
    return TransactionSequence.from_columns([a for a, _ in pairs], [r for _, r in pairs], label)


def assemble_datasets(legit: TransactionSequence, fraud_blocks, train_len: int = 100,
                      block_len: int = 5, count: Optional[int] = None) -> ExperimentSet:
    """Build the paired L/F datasets.

    L_i trains on the window of `train_len` legitimate transactions that
    ends just before block A_i and tests on A_i; F_i trains on the original
    first `train_len` transactions and tests on fraud block B_i.
    """
    count = len(fraud_blocks) if count is None else count
    if len(fraud_blocks) < count:
        raise ValueError(f"need {count} fraud blocks, got {len(fraud_blocks)}")
    need = train_len + count * block_len
    if len(legit) < need:
        raise InsufficientLegitimateData(f"need {need} legitimate transactions, got {len(legit)}")
    pairs = [(t.amount, t.region) for t in legit.transactions]
    base = pairs[:train_len]
    Ls, Fs = [], []
    for i in range(count):
        start = i * block_len
        train = pairs[start:start + train_len]
        test = pairs[start + train_len:start + train_len + block_len]
        Ls.append(Dataset(i + 1, Label.LEGITIMATE, _seq(train), _seq(test)))
        block = list(fraud_blocks[i])
        if len(block) != block_len:
            raise ValueError(f"fraud block {i + 1} has {len(block)} transactions, expected {block_len}")
        Fs.append(Dataset(i + 1, Label.FRAUDULENT, _seq(base), _seq(block, Label.FRAUDULENT)))
    return ExperimentSet(tuple(Ls), tuple(Fs), train_len, block_len)


def build_experiment(legit: TransactionSequence, config: FraudGenConfig, train_len: int = 100,
                     count: int = 20) -> ExperimentSet:
    """Generate `count` fraud blocks from the base sequence and assemble."""
    base_regions = legit.regions[:train_len]
    blocks = [gen_fraud_block(config, base_regions, block_rng(config.seed, i)) for i in range(count)]
    return assemble_datasets(legit, blocks, train_len, config.block_len, count)


# -- bundle serialization ----------------------------------------------------

def _records(exp: ExperimentSet):
    for ds in exp:
        for split, seq in (("train", ds.train), ("test", ds.test)):
            offset = 0 if split == "train" else ds.train_len
            for t in seq.transactions:
                yield [ds.dataset_id, ds.kind.value, t.index + offset, repr(float(t.amount)), t.region, split]


def dumps_bundle(exp: ExperimentSet) -> str:
    buf = io.StringIO()
    buf.write(BUNDLE_VERSION + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BUNDLE_HEADER)
    w.writerows(_records(exp))
    return buf.getvalue()


def dumps_stream(seq: TransactionSequence) -> str:
    """A raw legitimate stream as a bundle with dataset id 0."""
    buf = io.StringIO()
    buf.write(BUNDLE_VERSION + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BUNDLE_HEADER)
    for t in seq.transactions:
        w.writerow([0, "L", t.index, repr(float(t.amount)), t.region, "train"])
    return buf.getvalue()


def loads_bundle(text: str):
    """Parse a bundle. Returns an `ExperimentSet`, or a `TransactionSequence`
    when the bundle only holds a raw stream (dataset id 0)."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedBundle("empty bundle") from None
    if header != BUNDLE_HEADER:
        raise MalformedBundle(f"unexpected header {header}")
    groups: dict = {}
    try:
        for row in reader:
            ds_id, kind, index, amount, region, split = row
            key = (int(ds_id), Label(kind))
            groups.setdefault(key, []).append((int(index), float(amount), int(region), split))
    except (ValueError, TypeError) as exc:
        raise MalformedBundle(f"bad record: {exc}") from None
    if list(groups) == [(0, Label.LEGITIMATE)]:
        rows = sorted(groups[(0, Label.LEGITIMATE)])
        return TransactionSequence.from_columns([r[1] for r in rows], [r[2] for r in rows])
    Ls, Fs = [], []
    train_len = block_len = None
    for (ds_id, kind), rows in sorted(groups.items(), key=lambda kv: (kv[0][1].value != "L", kv[0][0])):
        rows.sort()
        train = [(a, r) for _, a, r, s in rows if s == "train"]
        test = [(a, r) for _, a, r, s in rows if s == "test"]
        if not train or not test:
            raise MalformedBundle(f"dataset {ds_id}{kind.value} lacks a train or test split")
        ds = Dataset(ds_id, kind, _seq(train), _seq(test, kind))
        (Ls if kind is Label.LEGITIMATE else Fs).append(ds)
        train_len, block_len = len(train), len(test)
    return ExperimentSet(tuple(Ls), tuple(Fs), train_len or 0, block_len or 0)


def write_atomic(path, content) -> None:
    """Write text or bytes to a temporary sibling, then rename into place."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    data = content.encode("utf-8") if isinstance(content, str) else content
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def read_bundle(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UnreadableFile(f"{path}: {exc.strerror or exc}") from None
    return loads_bundle(text)


# -- synthetic purchase stream -------------------------------------------------

STATES = ["VA", "MD", "DC", "PA", "NY", "NJ", "NC", "SC", "GA", "FL", "OH", "MI",
          "IL", "WI", "MN", "TX", "CO", "AZ", "CA", "WA", "OR", "MA", "CT", "TN",
          "KY", "WV", "DE", "RI", "NH", "VT", "ME", "AL", "MS", "LA", "AR", "MO",
          "IA", "IN", "KS", "NE", "OK", "NM", "UT", "NV", "ID", "MT", "WY", "ND",
          "SD", "AK", "HI"]


@dataclass(frozen=True)
class StreamSpec:
    """Parameters of the synthetic cardholder used for the frozen sample.

    The cardholder works in regional circuits: a handful of vendor states
    visited along a habitual route, staying on a circuit for a while before
    moving to the next. Log-amounts carry a five-day weekly profile, mild
    AR(1) noise and occasional large purchases.
    """

    n: int = 300
    circuits: int = 16
    circuit_size: int = 3
    dwell: float = 10.0
    follow_route: float = 0.75
    repeat: float = 0.15
    base_log: float = 4.0
    weekday: tuple = (0.35, -0.15, 0.05, -0.3, 0.2)
    phi: float = 0.3
    noise_sd: float = 0.25
    big_prob: float = 0.03
    big_jump: float = 1.2


def synth_purchase_stream(seed: int, spec: StreamSpec = StreamSpec()):
    """Seeded synthetic legitimate stream as (amounts, state codes)."""
    rng = np.random.default_rng(seed)
    need = spec.circuits * spec.circuit_size
    if need > len(STATES):
        raise ValueError("not enough state codes for the requested circuits")
    states = list(rng.permutation(STATES)[:need])
    circuits = [states[i * spec.circuit_size:(i + 1) * spec.circuit_size] for i in range(spec.circuits)]
    popularity = rng.dirichlet(np.full(spec.circuits, 4.0))
    offsets = rng.normal(0.0, 0.15, spec.circuits)

    c = int(rng.choice(spec.circuits, p=popularity))
    pos = 0
    noise = 0.0
    amounts, regions = [], []
    for i in range(spec.n):
        if i and rng.random() < 1.0 / spec.dwell:
            others = [k for k in range(spec.circuits) if k != c]
            w = popularity[others] / popularity[others].sum()
            c = int(rng.choice(others, p=w))
            pos = 0
        elif i:
            u = rng.random()
            if u < spec.follow_route:
                pos = (pos + 1) % spec.circuit_size
            elif u >= spec.follow_route + spec.repeat:
                pos = int(rng.integers(spec.circuit_size))
        regions.append(circuits[c][pos])
        noise = spec.phi * noise + rng.normal(0.0, spec.noise_sd)
        logamt = spec.base_log + spec.weekday[i % len(spec.weekday)] + offsets[c] + noise
        if rng.random() < spec.big_prob:
            logamt += spec.big_jump
        amounts.append(round(math.exp(logamt), 2))
    return amounts, regions


def write_purchase_csv(path, amounts, regions) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([DEFAULT_AMOUNT_COLUMN, DEFAULT_REGION_COLUMN])
    for a, r in zip(amounts, regions):
        w.writerow([f"{a:.2f}", r])
    write_atomic(path, buf.getvalue())
