"""Class association rule mining over categorical tables.

Transactions are one set of ``attribute=category`` items per row. Frequent
itemsets come from a level-wise Apriori search whose support counting runs
on per-item transaction-id bitsets (see :mod:`carmine.kernels`). Rules keep
a single class item as consequent.
"""

from __future__ import annotations

import json
import math
import warnings
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import kernels
from .discretizer import CategoricalTable


class Item(NamedTuple):
    attribute: str
    category: str | None

    def name(self, sep="=") -> str:
        return self.attribute if self.category is None else f"{self.attribute}{sep}{self.category}"


class ItemDictionary:
    """Dense ids 0..n-1 for (attribute, category) pairs."""

    def __init__(self, items: Sequence[Item], class_attribute: str | None = None):
        self.items = tuple(Item(*it) for it in items)
        self._index = {it: i for i, it in enumerate(self.items)}
        if len(self._index) != len(self.items):
            raise ValueError("duplicate items in dictionary")
        self.class_attribute = class_attribute
        attrs = sorted({it.attribute for it in self.items})
        code = {a: i for i, a in enumerate(attrs)}
        self.attribute_codes = np.array([code[it.attribute] for it in self.items], dtype=np.int64)

    def __len__(self):
        return len(self.items)

    def __contains__(self, item):
        return tuple(item) in self._index

    def id_of(self, attribute: str, category: str | None = None) -> int:
        try:
            return self._index[Item(attribute, category)]
        except KeyError:
            raise KeyError(f"unknown item {attribute}={category}") from None

    def is_class(self, item_id: int) -> bool:
        return self.class_attribute is not None and self.items[item_id].attribute == self.class_attribute

    def class_ids(self) -> list[int]:
        return [i for i in range(len(self.items)) if self.is_class(i)]

    def name(self, item_id: int) -> str:
        return self.items[item_id].name()


@dataclass(frozen=True, eq=False)
class TransactionSet:
    transactions: tuple[tuple[int, ...], ...]
    dictionary: ItemDictionary
    row_ids: tuple[str, ...] = ()
    bits: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        txs = tuple(tuple(sorted(set(t))) for t in self.transactions)
        n_items = len(self.dictionary)
        codes = self.dictionary.attribute_codes
        for t in txs:
            if t and (t[0] < 0 or t[-1] >= n_items):
                raise ValueError(f"item id out of range in transaction {t}")
            if len(set(codes[list(t)].tolist())) != len(t):
                raise ValueError(f"transaction {t} holds two items of one attribute")
        words = max(1, (len(txs) + 63) // 64)
        bits = np.zeros((n_items, words), dtype=np.uint64)
        for tid, t in enumerate(txs):
            w, b = divmod(tid, 64)
            for item in t:
                bits[item, w] |= np.uint64(1) << np.uint64(b)
        bits.flags.writeable = False
        object.__setattr__(self, "transactions", txs)
        object.__setattr__(self, "bits", bits)

    @property
    def n(self) -> int:
        return len(self.transactions)

    @classmethod
    def from_itemsets(cls, itemsets: Iterable[Iterable], class_attribute: str | None = None) -> TransactionSet:
        """Build from raw item labels.

        Labels may be ``(attribute, category)`` pairs or plain strings; a plain
        string is its own attribute. Ids follow sorted label order.
        """
        rows = [[it if isinstance(it, tuple) else (it, None) for it in row] for row in itemsets]
        items = sorted({Item(*it) for row in rows for it in row}, key=lambda i: (i.attribute, i.category or ""))
        dictionary = ItemDictionary(items, class_attribute)
        return cls(tuple(tuple(dictionary.id_of(*it) for it in row) for row in rows), dictionary)


def encode_transactions(
    table: CategoricalTable, class_attribute: str, attributes: Sequence[str] | None = None
) -> tuple[TransactionSet, list[str]]:
    """One transaction per row with a class label; rows lacking it are returned as excluded.

    ``attributes`` limits the antecedent-side columns (the class column is
    always kept); by default every column of the table is encoded.
    """
    if not table.row_ids:
        raise ValueError("cannot encode an empty table")
    jc = table.attribute_index(class_attribute)
    if attributes is not None:
        wanted = set(attributes) | {class_attribute}
        for a in wanted:
            table.attribute_index(a)
    else:
        wanted = set(table.attributes)
    keep = table.codes[:, jc] >= 0
    excluded = [r for r, k in zip(table.row_ids, keep) if not k]
    codes = table.codes[keep]
    items = []
    lookup = {}
    for j, attr in enumerate(table.attributes):
        if attr not in wanted:
            continue
        present = set(codes[:, j].tolist())
        for c, label in enumerate(table.labels(attr)):
            if c in present:
                lookup[(j, c)] = len(items)
                items.append(Item(attr, label))
    dictionary = ItemDictionary(items, class_attribute)
    txs = tuple(tuple(lookup[(j, int(c))] for j, c in enumerate(row) if (j, int(c)) in lookup) for row in codes)
    row_ids = tuple(r for r, k in zip(table.row_ids, keep) if k)
    return TransactionSet(txs, dictionary, row_ids), excluded


def support_count(itemset: Iterable[int], ts: TransactionSet) -> int:
    items = sorted(set(itemset))
    if not items:
        return ts.n
    return int(kernels.count_support(ts.bits, np.array([items]))[0])


def min_count(min_support: float, n: int) -> int:
    """Smallest count c with c / n >= min_support (the float comparison itself)."""
    c = max(0, math.ceil(min_support * n))
    while c > 0 and (c - 1) / n >= min_support:
        c -= 1
    while c <= n and c / n < min_support:
        c += 1
    return c


def _join(level: list[tuple[int, ...]], attr_codes: np.ndarray) -> list[tuple[int, ...]]:
    """Prefix join of sorted (k-1)-itemsets plus the downward-closure prune."""
    known = set(level)
    groups: dict[tuple[int, ...], list[int]] = defaultdict(list)
    for s in level:
        groups[s[:-1]].append(s[-1])
    out = []
    for prefix, tails in groups.items():
        tails.sort()
        for a_pos, a in enumerate(tails):
            for b in tails[a_pos + 1 :]:
                if attr_codes[a] == attr_codes[b]:
                    continue
                cand = prefix + (a, b)
                # the two subsets dropping a or b are known frequent by construction
                if all(cand[:i] + cand[i + 1 :] in known for i in range(len(prefix))):
                    out.append(cand)
    out.sort()
    return out


def apriori_frequent(
    ts: TransactionSet, min_support: float, max_size: int, backend: str | None = None
) -> dict[tuple[int, ...], int]:
    """All itemsets of size 1..max_size with support >= min_support, with counts.

    Keys are sorted id tuples ordered by size, then lexicographically.
    """
    if not 0.0 < min_support <= 1.0:
        raise ValueError("min_support must lie in (0, 1]")
    if max_size < 1:
        raise ValueError("max_size must be at least 1")
    result: dict[tuple[int, ...], int] = {}
    if ts.n == 0 or len(ts.dictionary) == 0:
        return result
    threshold = min_count(min_support, ts.n)
    singles = np.arange(len(ts.dictionary)).reshape(-1, 1)
    counts = kernels.count_support(ts.bits, singles, backend=backend)
    level = [(int(i),) for i, c in zip(singles[:, 0], counts) if c >= threshold]
    for s in level:
        result[s] = int(counts[s[0]])
    size = 1
    while level and size < max_size:
        size += 1
        cands = _join(level, ts.dictionary.attribute_codes)
        if not cands:
            break
        counts = kernels.count_support(ts.bits, np.array(cands, dtype=np.int64), backend=backend)
        level = []
        for cand, c in zip(cands, counts):
            if c >= threshold:
                result[cand] = int(c)
                level.append(cand)
    return result


@dataclass(frozen=True)
class MiningParams:
    min_support: float = 0.065
    min_confidence: float = 0.9
    min_len: int = 2
    max_len: int = 5
    consequent: str = "DpM"
    classes: tuple[str, ...] | None = None
    lift_floor: float | None = None

    def __post_init__(self):
        if not 2 <= self.min_len <= self.max_len:
            raise ValueError("need 2 <= min_len <= max_len")
        if not 0.0 < self.min_support <= 1.0:
            raise ValueError("min_support must lie in (0, 1]")
        if not 0.0 <= self.min_confidence <= 1.0:
            raise ValueError("min_confidence must lie in [0, 1]")
        if self.lift_floor is not None and self.lift_floor < 0:
            raise ValueError("lift_floor must be non-negative")
        if self.classes is not None:
            object.__setattr__(self, "classes", tuple(self.classes))

    @classmethod
    def from_json(cls, obj) -> MiningParams:
        known = {k: obj[k] for k in cls.__dataclass_fields__ if k in obj}
        return cls(**known)

    def to_json(self) -> dict:
        out = asdict(self)
        if out["classes"] is not None:
            out["classes"] = list(out["classes"])
        return out


@dataclass(frozen=True)
class ClassRule:
    antecedent: tuple[int, ...]
    consequent: int
    support_count: int
    antecedent_count: int
    consequent_count: int
    n: int
    antecedent_items: tuple[Item, ...] = ()
    consequent_item: Item | None = None

    @property
    def length(self) -> int:
        return len(self.antecedent) + 1

    @property
    def support(self) -> float:
        return self.support_count / self.n

    @property
    def confidence(self) -> float:
        return self.support_count / self.antecedent_count

    @property
    def lift(self) -> float:
        # one rounding from exact integers, so lift == 1.0 exactly when X and Y are independent
        return self.support_count * self.n / (self.antecedent_count * self.consequent_count)

    def antecedent_names(self) -> tuple[str, ...]:
        return tuple(it.name() for it in self.antecedent_items)

    def sort_key(self):
        return (-self.lift, -self.confidence, -self.support, self.antecedent_names(), self.consequent_item.name())

    def to_json(self) -> dict:
        return {
            "antecedent": [{"attribute": it.attribute, "category": it.category} for it in self.antecedent_items],
            "consequent": {"attribute": self.consequent_item.attribute, "category": self.consequent_item.category},
            "support": self.support,
            "confidence": self.confidence,
            "lift": self.lift,
            "support_count": self.support_count,
            "antecedent_count": self.antecedent_count,
            "consequent_count": self.consequent_count,
            "n": self.n,
        }


def _class_targets(ts: TransactionSet, params: MiningParams) -> list[int]:
    d = ts.dictionary
    if d.class_attribute is not None and d.class_attribute != params.consequent:
        raise ValueError(f"transactions were encoded for class {d.class_attribute!r}, not {params.consequent!r}")
    present = [i for i, it in enumerate(d.items) if it.attribute == params.consequent]
    if params.classes is None:
        return present
    targets = []
    for label in params.classes:
        item = Item(params.consequent, label)
        if item in d:
            targets.append(d.id_of(*item))
        else:
            warnings.warn(f"class {item.name()} never occurs; no rules for it", stacklevel=3)
    return targets


def candidate_rules(
    ts: TransactionSet, params: MiningParams, frequent: dict | None = None, backend: str | None = None
) -> list[ClassRule]:
    """Every X -> Y with X u {Y} frequent and |X| + 1 <= max_len, before any other filter."""
    targets = set(_class_targets(ts, params))
    if not targets:
        return []
    if frequent is None:
        frequent = apriori_frequent(ts, params.min_support, params.max_len, backend=backend)
    items = ts.dictionary.items
    rules = []
    for itemset, count in frequent.items():
        if len(itemset) < 2:
            continue
        ys = [i for i in itemset if i in targets]
        if len(ys) != 1:
            continue
        y = ys[0]
        x = tuple(i for i in itemset if i != y)
        rules.append(
            ClassRule(
                antecedent=x,
                consequent=y,
                support_count=count,
                antecedent_count=frequent[x],
                consequent_count=frequent[(y,)],
                n=ts.n,
                antecedent_items=tuple(items[i] for i in x),
                consequent_item=items[y],
            )
        )
    rules.sort(key=ClassRule.sort_key)
    return rules


def _passes(rule: ClassRule, params: MiningParams) -> bool:
    return (
        rule.confidence >= params.min_confidence
        and params.min_len <= rule.length <= params.max_len
        and rule.support >= params.min_support
        and (params.lift_floor is None or rule.lift >= params.lift_floor)
    )


def generate_cars(ts: TransactionSet, params: MiningParams, backend: str | None = None) -> list[ClassRule]:
    """Class rules passing the confidence, length, support and lift filters, best first."""
    return [r for r in candidate_rules(ts, params, backend=backend) if _passes(r, params)]


def _at_least_as_confident(a: ClassRule, b: ClassRule) -> bool:
    # conf(a) >= conf(b), decided on integers
    return a.support_count * b.antecedent_count >= b.support_count * a.antecedent_count


def prune_redundant(rules: Sequence[ClassRule], reference: Sequence[ClassRule] | None = None) -> list[ClassRule]:
    """Keep rules whose confidence strictly beats every proper sub-antecedent rule.

    Sub-rules are looked up in ``reference`` (default: ``rules`` itself);
    passing the unfiltered candidate list compares against sub-rules that
    failed earlier filters too. Output is sorted, so input order is irrelevant.
    """
    pool = rules if reference is None else reference
    index = {(r.consequent, r.antecedent): r for r in pool}
    kept = []
    for r in rules:
        redundant = False
        for size in range(1, len(r.antecedent)):
            for sub in combinations(r.antecedent, size):
                other = index.get((r.consequent, sub))
                if other is not None and _at_least_as_confident(other, r):
                    redundant = True
                    break
            if redundant:
                break
        if not redundant:
            kept.append(r)
    unique = {(r.consequent, r.antecedent): r for r in kept}
    return sorted(unique.values(), key=ClassRule.sort_key)


@dataclass
class MiningResult:
    rules: list[ClassRule]
    filter_counts: dict[str, int]
    params: MiningParams


def mine(ts: TransactionSet, params: MiningParams, prune: bool = True, backend: str | None = None) -> MiningResult:
    """Candidates -> confidence -> length -> support -> lift -> redundancy, with counts after each step."""
    candidates = candidate_rules(ts, params, backend=backend)
    counts = {"candidates": len(candidates)}
    stage = [r for r in candidates if r.confidence >= params.min_confidence]
    counts["confidence"] = len(stage)
    stage = [r for r in stage if params.min_len <= r.length <= params.max_len]
    counts["length"] = len(stage)
    stage = [r for r in stage if r.support >= params.min_support]
    counts["support"] = len(stage)
    if params.lift_floor is not None:
        stage = [r for r in stage if r.lift >= params.lift_floor]
    counts["lift"] = len(stage)
    if prune:
        stage = prune_redundant(stage, reference=candidates)
    counts["redundancy"] = len(stage)
    return MiningResult(stage, counts, params)


def antecedent_histogram(rules: Iterable[ClassRule]) -> dict[Item, int]:
    """Occurrences of each item across rule antecedents, keyed in item-name order."""
    counts: dict[Item, int] = defaultdict(int)
    for r in rules:
        for it in r.antecedent_items:
            counts[it] += 1
    return {it: counts[it] for it in sorted(counts, key=Item.name)}


def rules_to_json(rules: Sequence[ClassRule]) -> str:
    return json.dumps([r.to_json() for r in rules], indent=2) + "\n"


def rules_from_json(text: str) -> list[ClassRule]:
    """Rebuild rules from :func:`rules_to_json` output.

    Item ids are local to the returned list.
    """
    raw = json.loads(text)
    names: dict[Item, int] = {}

    def ident(it):
        return names.setdefault(it, len(names))

    out = []
    for entry in raw:
        xs = tuple(Item(a["attribute"], a["category"]) for a in entry["antecedent"])
        y = Item(entry["consequent"]["attribute"], entry["consequent"]["category"])
        counts = (int(entry[k]) for k in ("support_count", "antecedent_count", "consequent_count", "n"))
        out.append(ClassRule(tuple(ident(x) for x in xs), ident(y), *counts, xs, y))
    return out


def rules_to_text(rules: Sequence[ClassRule]) -> str:
    """Plain-text listing: comma-joined ``Attr = Cat`` antecedents plus metrics."""
    lines = ["antecedent\tconsequent\tsupport\tconfidence\tlift"]
    for r in rules:
        lhs = ", ".join(it.name(" = ") for it in r.antecedent_items)
        lines.append(f"{lhs}\t{r.consequent_item.name(' = ')}\t{r.support:.4f}\t{r.confidence:.4f}\t{r.lift:.4f}")
    return "\n".join(lines) + "\n"
