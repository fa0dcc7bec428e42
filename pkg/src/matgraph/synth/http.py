"""Chat-completions proposer over plain HTTP (urllib, no client library)."""
from __future__ import annotations

import base64
import json
import os
import time
import urllib.error
import urllib.request
from pathlib import Path

from ..engine import png_bytes
from .context import Mode
from .proposers import ProposerFailure, parse_proposal

API_KEY_ENV = "MATGRAPH_API_KEY"
IMG_MARKER = "<img>"

SYSTEM_PROMPT = (
    "You write procedural material graphs in SBS-Compact, one node at a time in "
    "topological order. Reply with exactly one node entry, or with the final "
    "`outputs:` block when the graph is complete."
)


def image_part(buf) -> dict:
    return {"type": "image", "media_type": "image/png",
            "data": base64.b64encode(png_bytes(buf)).decode("ascii")}


def context_parts(ctx) -> list:
    """Message parts for a context: target first, then text with previews interleaved.

    In mixed mode each ``<img>`` marker in the program text is followed by the
    matching node preview, so text and images alternate in node order.
    """
    parts = []
    slots = ctx.image_slots
    if ctx.target is not None:
        parts.append({"type": "text", "text": "Target material:"})
        parts.append(image_part(slots[0]))
        slots = slots[1:]
    if ctx.mode is Mode.MIXED:
        chunks = ctx.program_text.split(IMG_MARKER)
        for k, chunk in enumerate(chunks):
            if chunk:
                parts.append({"type": "text", "text": chunk})
            if k < len(chunks) - 1 and k < len(slots):
                parts.append(image_part(slots[k]))
    else:
        if ctx.program_text:
            parts.append({"type": "text", "text": ctx.program_text})
        parts += [image_part(b) for b in slots]
    parts.append({"type": "text", "text": "Next node:"})
    return parts


class HttpProposer:
    def __init__(self, endpoint, model, temperature=0.8, top_p=0.95, api_key=None,
                 retries=3, timeout=60.0, backoff=0.5, log_dir=None):
        self.endpoint = endpoint
        self.model = model
        self.temperature = temperature
        self.top_p = top_p
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.retries = retries
        self.timeout = timeout
        self.backoff = backoff
        self.log_dir = Path(log_dir) if log_dir else None
        self.calls = 0

    def request_body(self, ctx) -> dict:
        return {
            "model": self.model,
            "temperature": self.temperature,
            "top_p": self.top_p,
            "messages": [
                {"role": "system", "content": [{"type": "text", "text": SYSTEM_PROMPT}]},
                {"role": "user", "content": context_parts(ctx)},
            ],
        }

    def _post(self, body: dict) -> dict:
        data = json.dumps(body).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last = None
        for attempt in range(self.retries):
            req = urllib.request.Request(self.endpoint, data=data, headers=headers, method="POST")
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    return json.loads(resp.read().decode("utf-8"))
            except urllib.error.HTTPError as e:
                last = f"HTTP {e.code}"
                if e.code in (401, 403):
                    break
            except (urllib.error.URLError, OSError, json.JSONDecodeError) as e:
                last = str(e)
            if attempt + 1 < self.retries and self.backoff:
                time.sleep(self.backoff * 2 ** attempt)
        raise ProposerFailure(f"{self.endpoint}: {last} after {self.retries} attempt(s)")

    def _log(self, body, reply):
        if self.log_dir is None:
            return
        self.log_dir.mkdir(parents=True, exist_ok=True)
        stem = self.log_dir / f"call{self.calls:04d}"
        stem.with_suffix(".request.json").write_text(json.dumps(body, indent=1), encoding="utf-8")
        stem.with_suffix(".response.json").write_text(json.dumps(reply, indent=1), encoding="utf-8")

    def __call__(self, ctx):
        self.calls += 1
        body = self.request_body(ctx)
        reply = self._post(body)
        self._log(body, reply)
        try:
            text = reply["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as e:
            raise ProposerFailure(f"malformed completion: {e!r}") from None
        if isinstance(text, list):
            text = "".join(p.get("text", "") for p in text if isinstance(p, dict))
        return parse_proposal(text)
