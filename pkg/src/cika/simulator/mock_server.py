"""Scriptable OpenAI-compatible chat-completions server for wire tests.

Run it with ``cika mock-server`` or mount ``create_app(...)`` in a test
client.  Every raw request body is kept in ``app.state.requests``.
"""

from __future__ import annotations

import itertools
import threading
import time
from typing import Callable, Sequence

from fastapi import FastAPI, HTTPException, Request
from pydantic import BaseModel, ValidationError


class ChatMessage(BaseModel):
    role: str
    content: str


class ChatCompletionRequest(BaseModel):
    model: str
    messages: list[ChatMessage]
    temperature: float | None = None
    max_tokens: int | None = None
    seed: int | None = None


class Choice(BaseModel):
    index: int
    message: ChatMessage
    finish_reason: str = "stop"


class Usage(BaseModel):
    prompt_tokens: int
    completion_tokens: int
    total_tokens: int


class ChatCompletionResponse(BaseModel):
    id: str
    object: str = "chat.completion"
    created: int
    model: str
    choices: list[Choice]
    usage: Usage


class ScriptedResponder:
    """Replies by first matching substring of the last user message.

    Each rule holds a list of replies used in rotation, so a rule like
    ``("Solve the problem", ["\\boxed{1}", "\\boxed{42}"])`` answers
    correctly every other time.
    """

    def __init__(self, rules: Sequence[tuple[str, Sequence[str]]] = (), default: str = "\\boxed{42}"):
        self._rules = [(needle, itertools.cycle(list(replies))) for needle, replies in rules]
        self.default = default
        self._lock = threading.Lock()

    def __call__(self, request: ChatCompletionRequest) -> str:
        user = next((m.content for m in reversed(request.messages) if m.role == "user"), "")
        with self._lock:
            for needle, replies in self._rules:
                if needle in user:
                    return next(replies)
        return self.default


def create_app(responder: Callable[[ChatCompletionRequest], str] | str = "\\boxed{42}",
               fail_first: int = 0) -> FastAPI:
    """``fail_first`` makes the first N requests answer HTTP 503 (retry tests)."""
    reply = responder if callable(responder) else (lambda _req, text=responder: text)
    app = FastAPI(title="mock chat completions")
    app.state.requests = []
    app.state.headers = []
    counter = itertools.count()
    lock = threading.Lock()

    @app.post("/v1/chat/completions", response_model=ChatCompletionResponse)
    async def chat_completions(request: Request) -> ChatCompletionResponse:
        raw = await request.body()
        with lock:
            n = next(counter)
            app.state.requests.append(raw)
            app.state.headers.append(dict(request.headers))
        if n < fail_first:
            raise HTTPException(status_code=503, detail="scripted failure")
        try:
            parsed = ChatCompletionRequest.model_validate_json(raw)
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        text = reply(parsed)
        prompt_tokens = sum(len(m.content.split()) for m in parsed.messages)
        completion_tokens = len(text.split())
        return ChatCompletionResponse(
            id=f"mock-{n}",
            created=int(time.time()),
            model=parsed.model,
            choices=[Choice(index=0, message=ChatMessage(role="assistant", content=text))],
            usage=Usage(prompt_tokens=prompt_tokens, completion_tokens=completion_tokens,
                        total_tokens=prompt_tokens + completion_tokens),
        )

    return app
