"""Dataset ingestion and synthetic workload generation.

The file format is line-oriented text, one pair per line:

    client_id,key,value

Keys may be arbitrary strings; a dense index is assigned in first-appearance
order. Malformed lines are rejected individually and reported with their line
numbers rather than aborting the whole file.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .accounting import ProtocolParams
from .collection import KeyValuePair
from .errors import IngestError


@dataclass
class ParsedData:
    clients: list  # list[list[KeyValuePair]]
    key_names: list  # dense index -> original key string
    rejects: list = dc_field(default_factory=list)  # (line_number, reason)


def parse_dataset_lines(lines) -> ParsedData:
    """Parse `client_id,key,value` lines into per-client pair lists."""
    client_index: dict[str, int] = {}
    key_index: dict[str, int] = {}
    clients: list[list[KeyValuePair]] = []
    key_names: list[str] = []
    rejects = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 3:
            rejects.append((lineno, f"expected 3 comma-separated fields, got {len(parts)}"))
            continue
        cid, key, value_text = (p.strip() for p in parts)
        if not cid or not key:
            rejects.append((lineno, "empty client id or key"))
            continue
        try:
            value = float(value_text)
        except ValueError:
            rejects.append((lineno, f"value {value_text!r} is not a number"))
            continue
        if cid not in client_index:
            client_index[cid] = len(clients)
            clients.append([])
        if key not in key_index:
            key_index[key] = len(key_names)
            key_names.append(key)
        clients[client_index[cid]].append(KeyValuePair(key_index[key], value))
    return ParsedData(clients, key_names, rejects)


def load_dataset(path: str) -> ParsedData:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_dataset_lines(fh)
    except OSError as exc:
        raise IngestError(f"cannot read dataset {path}: {exc}") from exc


def synthetic_dataset(params: ProtocolParams, seed: int) -> list[list[KeyValuePair]]:
    """Generate clients with Zipf(1.1)-popular keys and uniform values.

    Per client the number of pairs is uniform on [0, max_keys]; keys are
    drawn without replacement proportionally to their popularity, which
    deliberately stresses the minimum-frequency assumption on rare keys.
    """
    rng = np.random.default_rng([seed, 7])
    weights = (np.arange(params.num_keys) + 1.0) ** -1.1
    weights /= weights.sum()
    clients = []
    for _ in range(params.num_clients):
        k = int(rng.integers(0, params.max_keys + 1))
        k = min(k, params.num_keys)
        if k == 0:
            clients.append([])
            continue
        keys = rng.choice(params.num_keys, size=k, replace=False, p=weights)
        values = rng.uniform(params.value_low, params.value_high, size=k)
        clients.append(
            [KeyValuePair(int(key), float(v)) for key, v in zip(sorted(keys), values)]
        )
    return clients
