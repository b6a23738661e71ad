import json
import subprocess
import sys

import pytest


class StdioServer:
    """One sidecar child process, spoken to line-by-line over its pipes."""

    def __init__(self, *args: str):
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "rankcascade_sidecar.cli", *args],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
        )

    def send_raw(self, data: bytes) -> dict:
        self.proc.stdin.write(data)
        self.proc.stdin.flush()
        line = self.proc.stdout.readline()
        assert line, "server closed the stream before replying"
        return json.loads(line)

    def ask(self, message: dict) -> dict:
        return self.send_raw(json.dumps(message).encode("utf-8") + b"\n")

    def close(self) -> int:
        self.proc.stdin.close()
        return self.proc.wait(timeout=10)


@pytest.fixture
def spawn_stdio():
    """Factory for StdioServer children; kills leftovers on teardown."""
    servers: list[StdioServer] = []

    def spawn(*args: str) -> StdioServer:
        server = StdioServer(*args)
        servers.append(server)
        return server

    yield spawn
    for server in servers:
        if server.proc.poll() is None:
            server.proc.kill()
        server.proc.wait(timeout=10)
        server.proc.stdin.close()
        server.proc.stdout.close()
        server.proc.stderr.close()
