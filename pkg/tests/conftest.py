import math
import socket
import sys
import threading
import time
from pathlib import Path

import pytest
import uvicorn

sys.path.insert(0, str(Path(__file__).parent))

from cika.simulator import ScmBinding, SimProblem  # noqa: E402
from cika.simulator.mock_server import ScriptedResponder, create_app  # noqa: E402


def bind(scm, names=None, control=None, lens=None, pid="p0", gold="42"):
    names = names or [f"c{j}" for j in range(scm.n_concepts)]
    return SimProblem(id=pid, statement=f"Problem {pid}", gold_answer=gold, domain="algebra",
                      binding=ScmBinding(scm, tuple(names), control, dict(lens or {})))


def within_3_sigma(observed, expected, n):
    se = math.sqrt(max(expected * (1 - expected), 1e-12) / n)
    return abs(observed - expected) <= 3 * se


@pytest.fixture
def bind_problem():
    return bind


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture
def mock_server():
    responder = ScriptedResponder([
        ("rate how well", ["Vieta's Formulas: LOW\nStars and Bars: MEDIUM"]),
        ("Assume mastery of Vieta", ["\\boxed{42}", "\\boxed{42}", "\\boxed{7}"]),
        ("Assume mastery of", ["\\boxed{7}", "\\boxed{42}", "\\boxed{7}", "\\boxed{7}"]),
        ("Solve the problem", ["\\boxed{42}", "\\boxed{7}", "\\boxed{7}", "\\boxed{7}"]),
    ])
    app = create_app(responder)
    port = _free_port()
    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=port, log_level="error"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10
    while not server.started and time.time() < deadline:
        time.sleep(0.02)
    yield app, f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(5)
