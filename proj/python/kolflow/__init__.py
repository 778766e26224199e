"""Python interface to the kolflow pipeline engine.

Documents cross the native boundary as JSON and surface here as plain
dicts and lists.
"""

import json
from typing import Any, Dict, List, Optional, Sequence, Tuple

from . import _kolflow
from ._errors import KolflowError

__all__ = ["Engine", "KolflowError", "estimate_similarity", "topological_order"]


class Engine:
    """Registry, artifact store and executor rooted at one directory."""

    def __init__(self, store_root: str, with_mocks: bool = False,
                 registry_snapshot: Optional[str] = None):
        self._native = _kolflow.Engine(str(store_root), with_mocks, registry_snapshot)

    def list_services(self, capability: Optional[str] = None) -> List[Dict[str, Any]]:
        return json.loads(self._native.list_services(capability))

    def register_service(self, descriptor: Dict[str, Any]) -> str:
        return self._native.register_service(json.dumps(descriptor))

    def unregister_service(self, service_id: str) -> Dict[str, Any]:
        return json.loads(self._native.unregister_service(service_id))

    def synthesize(self, query: Dict[str, Any]) -> Dict[str, Any]:
        return json.loads(self._native.synthesize(json.dumps(query)))

    def validate(self, spec: Dict[str, Any]) -> List[Dict[str, str]]:
        return json.loads(self._native.validate(json.dumps(spec)))

    def put(self, artifact_type: str, payload: bytes) -> str:
        return self._native.put(artifact_type, bytes(payload))

    def get(self, ref: str) -> bytes:
        return self._native.get(ref)

    def run(self, spec: Dict[str, Any], max_parallel: int = 1, fail_fast: bool = False,
            memoize: bool = False) -> Dict[str, Any]:
        return json.loads(self._native.run(json.dumps(spec), max_parallel, fail_fast, memoize))

    def start_run(self, spec: Dict[str, Any], max_parallel: int = 1, fail_fast: bool = False,
                  memoize: bool = False) -> str:
        return self._native.start_run(json.dumps(spec), max_parallel, fail_fast, memoize)

    def status(self, run_id: str) -> Dict[str, Any]:
        return json.loads(self._native.status(run_id))

    def wait(self, run_id: str) -> Dict[str, Any]:
        return json.loads(self._native.wait(run_id))

    def cancel(self, run_id: str) -> Dict[str, Any]:
        return json.loads(self._native.cancel(run_id))


def topological_order(nodes: Sequence[str], edges: Sequence[Tuple[str, str]]) -> List[str]:
    return _kolflow.topological_order(list(nodes), [tuple(e) for e in edges])


def estimate_similarity(source: Sequence[Tuple[float, float]],
                        target: Sequence[Tuple[float, float]]) -> Dict[str, float]:
    return _kolflow.estimate_similarity([tuple(p) for p in source], [tuple(p) for p in target])
