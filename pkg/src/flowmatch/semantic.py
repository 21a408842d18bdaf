"""Pluggable equivalence oracle over natural-language decision descriptions.

Two backends: a deterministic token-overlap baseline so evaluation runs
offline, and an HTTP client for a remote language-model service. Remote
replies are cached in a newline-delimited transcript so re-scoring never
re-asks the backend and recorded transcripts make runs reproducible.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from .errors import (
    BackendFormatError,
    BackendTimeoutError,
    BackendTransportError,
)

_STOPWORDS = {
    "a", "an", "the", "of", "in", "on", "at", "to", "for", "per", "by",
    "with", "and", "or", "is", "are", "was", "were", "as", "from", "that",
    "this", "be", "it", "its",
}

_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class MatchQuery:
    left: tuple[tuple[str, str], ...]  # (id, description)
    right: tuple[tuple[str, str], ...]
    context: str = ""

    def __post_init__(self):
        for side, items in (("left", self.left), ("right", self.right)):
            ids = [i for i, _ in items]
            if len(ids) != len(set(ids)):
                raise BackendFormatError(f"duplicate ids on {side} side of query")


@dataclass(frozen=True)
class MatchPair:
    left: str
    right: str
    confidence: float
    rationale: str = ""


@dataclass(frozen=True)
class MatchAnswer:
    pairs: tuple[MatchPair, ...]

    def validate(self, query: MatchQuery) -> "MatchAnswer":
        left_ids = {i for i, _ in query.left}
        right_ids = {i for i, _ in query.right}
        seen_left: set[str] = set()
        seen_right: set[str] = set()
        for pair in self.pairs:
            if pair.left not in left_ids or pair.right not in right_ids:
                raise BackendFormatError(
                    f"answer pairs unknown ids ({pair.left!r}, {pair.right!r})"
                )
            if pair.left in seen_left or pair.right in seen_right:
                raise BackendFormatError(f"id matched twice ({pair.left!r}, {pair.right!r})")
            if not 0.0 <= pair.confidence <= 1.0:
                raise BackendFormatError(f"confidence {pair.confidence} outside [0, 1]")
            seen_left.add(pair.left)
            seen_right.add(pair.right)
        return self


def stem(token: str) -> str:
    """Tiny suffix stemmer; consistency matters more than linguistics."""
    if len(token) > 3 and token.endswith("s") and not token.endswith("ss"):
        token = token[:-1]
    if len(token) > 4 and token.endswith("ing"):
        token = token[:-3]
    elif len(token) > 3 and token.endswith("ed"):
        token = token[:-2]
    if len(token) > 3 and token.endswith("e"):
        token = token[:-1]
    return token


def content_tokens(text: str) -> frozenset[str]:
    tokens = _TOKEN_RE.findall(text.lower())
    return frozenset(stem(t) for t in tokens if t not in _STOPWORDS)


def _overlap(a: frozenset[str], b: frozenset[str]) -> float:
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)


def greedy_pairing(scores: list[tuple[float, int, int]], threshold: float) -> list[tuple[int, int, float]]:
    """Highest score wins; ties break by (left order, right order)."""
    chosen: list[tuple[int, int, float]] = []
    used_left: set[int] = set()
    used_right: set[int] = set()
    for score, i, j in sorted(scores, key=lambda s: (-s[0], s[1], s[2])):
        if score < threshold:
            break
        if i in used_left or j in used_right:
            continue
        used_left.add(i)
        used_right.add(j)
        chosen.append((i, j, score))
    return sorted(chosen)


def lexical_match(query: MatchQuery, threshold: float = 0.5) -> MatchAnswer:
    """Deterministic token-overlap pairing: |intersection| / |union|."""
    left_sets = [content_tokens(text) for _, text in query.left]
    right_sets = [content_tokens(text) for _, text in query.right]
    scores = [
        (_overlap(ls, rs), i, j)
        for i, ls in enumerate(left_sets)
        for j, rs in enumerate(right_sets)
    ]
    pairs = tuple(
        MatchPair(
            query.left[i][0],
            query.right[j][0],
            score,
            f"token overlap {len(left_sets[i] & right_sets[j])}/{len(left_sets[i] | right_sets[j])}",
        )
        for i, j, score in greedy_pairing(scores, threshold)
    )
    return MatchAnswer(pairs).validate(query)


class SemanticMatcher:
    """Interface every matching backend implements."""

    backend_id: str = "abstract"

    def match(self, query: MatchQuery) -> MatchAnswer:
        raise NotImplementedError


class LexicalMatcher(SemanticMatcher):
    def __init__(self, threshold: float = 0.5):
        self.threshold = threshold
        self.backend_id = f"lexical:{threshold}"

    def match(self, query: MatchQuery) -> MatchAnswer:
        return lexical_match(query, self.threshold)


@dataclass
class BackendConfig:
    url: str
    model: str
    api_key_env: str | None = None
    timeout: float = 30.0
    transport_retries: int = 3
    format_retries: int = 2
    chunk_size: int = 20
    max_in_flight: int = 4
    backoff: float = 0.5


_PROMPT_TEMPLATE = """You compare two lists of analysis-decision descriptions and identify which \
items describe the same decision.

Context:
{context}

List A:
{left}

List B:
{right}

Reply with JSON only, shaped as
{{"pairs": [{{"left": "<id from list A>", "right": "<id from list B>", "confidence": <0..1>, "rationale": "<short reason>"}}]}}.
Each id may appear in at most one pair. Include only genuinely equivalent items."""


def render_prompt(query: MatchQuery) -> str:
    left = "\n".join(f"- {i}: {text}" for i, text in query.left)
    right = "\n".join(f"- {i}: {text}" for i, text in query.right)
    return _PROMPT_TEMPLATE.format(context=query.context or "(none)", left=left, right=right)


def _extract_json(text: str) -> dict:
    stripped = text.strip()
    if stripped.startswith("```"):
        stripped = re.sub(r"^```[a-zA-Z]*\n?", "", stripped)
        stripped = re.sub(r"\n?```$", "", stripped)
    try:
        return json.loads(stripped)
    except json.JSONDecodeError:
        start = stripped.find("{")
        end = stripped.rfind("}")
        if start >= 0 and end > start:
            try:
                return json.loads(stripped[start : end + 1])
            except json.JSONDecodeError:
                pass
    raise BackendFormatError("backend reply is not parseable JSON")


def parse_reply(text: str, query: MatchQuery) -> MatchAnswer:
    doc = _extract_json(text)
    raw_pairs = doc.get("pairs")
    if not isinstance(raw_pairs, list):
        raise BackendFormatError("backend reply lacks a 'pairs' list")
    pairs = []
    for item in raw_pairs:
        if not isinstance(item, dict) or "left" not in item or "right" not in item:
            raise BackendFormatError(f"malformed pair entry: {item!r}")
        confidence = item.get("confidence", 1.0)
        if not isinstance(confidence, (int, float)):
            raise BackendFormatError(f"non-numeric confidence: {confidence!r}")
        pairs.append(
            MatchPair(str(item["left"]), str(item["right"]), float(confidence), str(item.get("rationale", "")))
        )
    return MatchAnswer(tuple(pairs)).validate(query)


class TranscriptCache:
    """Newline-delimited JSON store of raw backend replies, keyed by prompt digest."""

    def __init__(self, path: Path | str):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, str] = {}
        if self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                record = json.loads(line)
                self._entries[record["key"]] = record["reply"]

    @staticmethod
    def key_for(backend_id: str, prompt: str) -> str:
        digest = hashlib.sha256(f"{backend_id}\n{prompt}".encode("utf-8")).hexdigest()
        return digest

    def get(self, key: str) -> str | None:
        with self._lock:
            return self._entries.get(key)

    def put(self, key: str, backend_id: str, prompt: str, reply: str):
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = reply
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as handle:
                record = {"key": key, "backend": backend_id, "prompt": prompt, "reply": reply}
                handle.write(json.dumps(record, sort_keys=True) + "\n")


class RemoteMatcher(SemanticMatcher):
    """HTTP backend client with transcript caching, retry, and chunking."""

    def __init__(self, config: BackendConfig, cache: TranscriptCache | None = None):
        self.config = config
        self.cache = cache
        self.backend_id = f"remote:{config.model}"
        self._gate = threading.Semaphore(config.max_in_flight)

    def _post(self, prompt: str) -> str:
        import os

        import requests

        headers = {"Content-Type": "application/json"}
        if self.config.api_key_env:
            key = os.environ.get(self.config.api_key_env)
            if key:
                headers["Authorization"] = f"Bearer {key}"
        delay = self.config.backoff
        last: Exception | None = None
        for attempt in range(self.config.transport_retries):
            final = attempt == self.config.transport_retries - 1
            try:
                with self._gate:
                    response = requests.post(
                        self.config.url,
                        json={"model": self.config.model, "prompt": prompt},
                        headers=headers,
                        timeout=self.config.timeout,
                    )
            except requests.Timeout as exc:
                raise BackendTimeoutError(f"backend timed out after {self.config.timeout}s") from exc
            except requests.RequestException as exc:
                last = exc
                if not final:
                    time.sleep(delay)
                    delay *= 2
                continue
            if response.status_code != 200:
                last = BackendTransportError(f"backend returned HTTP {response.status_code}")
                if not final:
                    time.sleep(delay)
                    delay *= 2
                continue
            try:
                return response.json()["text"]
            except (ValueError, KeyError) as exc:
                raise BackendFormatError("backend reply body lacks 'text'") from exc
        raise BackendTransportError(f"backend unreachable: {last}")

    def _ask(self, query: MatchQuery) -> MatchAnswer:
        prompt = render_prompt(query)
        key = TranscriptCache.key_for(self.backend_id, prompt)
        if self.cache is not None:
            cached = self.cache.get(key)
            if cached is not None:
                return parse_reply(cached, query)
        attempts = self.config.format_retries + 1
        last_error: BackendFormatError | None = None
        for _ in range(attempts):
            reply = self._post(prompt)
            try:
                answer = parse_reply(reply, query)
            except BackendFormatError as exc:
                last_error = exc
                continue
            if self.cache is not None:
                self.cache.put(key, self.backend_id, prompt, reply)
            return answer
        raise last_error if last_error is not None else BackendFormatError("no reply")

    def match(self, query: MatchQuery) -> MatchAnswer:
        if not query.left or not query.right:
            return MatchAnswer(())
        size = self.config.chunk_size
        if len(query.left) <= size and len(query.right) <= size:
            return self._ask(query)
        # chunk both sides, union the sub-answers, then re-resolve one-to-one
        left_chunks = [query.left[i : i + size] for i in range(0, len(query.left), size)]
        right_chunks = [query.right[i : i + size] for i in range(0, len(query.right), size)]
        left_order = {i: n for n, (i, _) in enumerate(query.left)}
        right_order = {i: n for n, (i, _) in enumerate(query.right)}
        collected: list[tuple[float, int, int, MatchPair]] = []
        for lc in left_chunks:
            for rc in right_chunks:
                sub = self._ask(MatchQuery(lc, rc, query.context))
                for pair in sub.pairs:
                    collected.append(
                        (pair.confidence, left_order[pair.left], right_order[pair.right], pair)
                    )
        chosen = greedy_pairing([(c, i, j) for c, i, j, _ in collected], threshold=0.0)
        by_pos = {(i, j): pair for _, i, j, pair in collected}
        pairs = tuple(by_pos[(i, j)] for i, j, _ in chosen)
        return MatchAnswer(pairs).validate(query)
