"""OpenAI-compatible chat-completions simulator."""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Sequence

import httpx
import numpy as np

from . import prompts
from .base import (ConceptDiagnosis, SimProblem, SimulatorError, TrialOutcome, check_concepts, check_lens)
from .verify import verify

log = logging.getLogger(__name__)

DEFAULT_NEGATIVE_CONTROLS = {
    "algebra": "Angle Bisector Theorem",
    "number theory": "Angle Bisector Theorem",
    "counting": "Angle Bisector Theorem",
    "combinatorics": "Angle Bisector Theorem",
    "precalculus": "Pigeonhole Principle",
    "geometry": "Vieta's Formulas",
    "general": "Angle Bisector Theorem",
}


class EndpointError(SimulatorError):
    pass


@dataclass
class EndpointConfig:
    base_url: str
    model: str
    temperature: float = 0.7  # not validated against the original setup
    max_tokens: int = 1024
    timeout: float = 120.0
    max_retries: int = 3
    backoff: float = 0.5
    max_in_flight: int = 8
    send_seed: bool = False
    api_key_env: str = "CIKA_API_KEY"
    audit_log: str | None = None
    negative_controls: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_NEGATIVE_CONTROLS))

    @property
    def url(self) -> str:
        return self.base_url.rstrip("/") + "/v1/chat/completions"


class EndpointSimulator:
    """Runs each trial as one chat completion.

    Transport errors, 429/5xx responses and malformed completions are
    retried up to ``max_retries`` times with exponential backoff; after
    that the trial raises :class:`EndpointError`.  A semaphore caps the
    number of requests in flight across threads.
    """

    kind = "endpoint"

    def __init__(self, config: EndpointConfig, client: httpx.Client | None = None):
        self.config = config
        self._client = client or httpx.Client(timeout=config.timeout)
        self._slots = threading.BoundedSemaphore(max(1, config.max_in_flight))
        self._log_lock = threading.Lock()

    def close(self) -> None:
        self._client.close()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _audit(self, record: dict) -> None:
        if not self.config.audit_log:
            return
        line = json.dumps(record, ensure_ascii=False)
        with self._log_lock, open(self.config.audit_log, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    def body_for(self, messages: list[dict[str, str]], rng: np.random.Generator | None = None) -> bytes:
        seed = None
        if self.config.send_seed and rng is not None:
            seed = int(rng.integers(0, 2 ** 31 - 1))
        return prompts.request_body(self.config.model, messages, self.config.temperature,
                                    self.config.max_tokens, seed)

    def complete(self, messages: list[dict[str, str]], rng: np.random.Generator | None = None) -> tuple[str, float]:
        body = self.body_for(messages, rng)
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                time.sleep(self.config.backoff * 2 ** (attempt - 1))
            start = time.perf_counter()
            try:
                with self._slots:
                    response = self._client.post(self.config.url, content=body, headers=self._headers())
            except httpx.TransportError as exc:
                last_error = exc
                self._audit({"request_body": body.decode("utf-8"), "attempt": attempt, "error": repr(exc)})
                continue
            latency = time.perf_counter() - start
            self._audit({"request_body": body.decode("utf-8"), "attempt": attempt, "status": response.status_code,
                         "response": response.text, "latency": latency})
            if response.status_code == 429 or response.status_code >= 500:
                last_error = EndpointError(f"HTTP {response.status_code}")
                continue
            if response.status_code >= 400:
                raise EndpointError(f"HTTP {response.status_code}: {response.text[:200]}")
            try:
                content = response.json()["choices"][0]["message"]["content"]
                if not isinstance(content, str):
                    raise TypeError("content is not a string")
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                last_error = EndpointError(f"malformed completion: {exc}")
                continue
            return content, latency
        raise EndpointError(f"request failed after {self.config.max_retries} retries: {last_error}")

    def _trial(self, problem: SimProblem, messages, rng) -> TrialOutcome:
        text, latency = self.complete(messages, rng)
        verdict = verify(text, problem.gold_answer)
        return TrialOutcome(correct=verdict.normalized, raw_answer=verdict.extracted or "", latency=latency,
                            strict_correct=verdict.strict)

    def baseline_trial(self, problem: SimProblem, rng: np.random.Generator) -> TrialOutcome:
        return self._trial(problem, prompts.baseline_messages(problem.statement), rng)

    def do_trial(self, problem: SimProblem, concepts: Sequence[str], rng: np.random.Generator) -> TrialOutcome:
        return self._trial(problem, prompts.intervention_messages(problem.statement, check_concepts(concepts)), rng)

    def lens_trial(self, problem: SimProblem, lens: str, rng: np.random.Generator) -> TrialOutcome:
        return self._trial(problem, prompts.lens_messages(problem.statement, check_lens(lens)), rng)

    def concept_gap(self, problem: SimProblem, failed_answer: str, rng: np.random.Generator) -> list[ConceptDiagnosis]:
        text, _ = self.complete(prompts.diagnostic_messages(problem.statement, failed_answer), rng)
        diagnoses = prompts.parse_diagnosis(text)
        if not diagnoses:
            log.warning("ConceptGap reply for %s could not be parsed; falling back to retrieval candidates", problem.id)
        return diagnoses

    def negative_control(self, problem: SimProblem) -> str | None:
        table = self.config.negative_controls
        return table.get(problem.domain.lower(), table.get("general"))
