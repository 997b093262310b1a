"""Flask application for inspecting a saved index workspace."""

import base64
import binascii
import logging

from flask import Flask, jsonify, request

from models.errors import AbsentKeyError, CorruptionError, SiriError
from models.index import Proof, Trace
from services.data_manager import DataManager
from services.managers import RootManager, verify_proof
from services.metrics import measure

log = logging.getLogger(__name__)


def parse_key(key_hex: str) -> bytes:
    """Parse a hex-encoded key."""
    try:
        return bytes.fromhex(key_hex)
    except ValueError:
        raise ValueError(f"Invalid key: {key_hex}. Must be hex") from None


def create_app(data_manager: DataManager) -> Flask:
    """Create the inspection API over ``data_manager``'s store and catalog."""
    app = Flask(__name__)
    roots = RootManager(data_manager)

    @app.errorhandler(CorruptionError)
    def handle_corruption(e: CorruptionError):
        log.error("store corruption: %s", e)
        return jsonify({"error": f"Store corruption: {e}"}), 500

    # Store routes
    @app.route("/api/stats", methods=["GET"])
    def get_stats():
        """Get node store statistics."""
        return jsonify(data_manager.store.stats().to_dict())

    # Root routes
    @app.route("/api/roots", methods=["GET"])
    def get_roots():
        """Get all named roots."""
        return jsonify({name: h.to_dict() for name, h in roots.get_all().items()})

    @app.route("/api/roots/<name>", methods=["GET"])
    def get_root(name: str):
        """Get a named root with its shape."""
        handle = roots.get_by_name(name)
        if not handle:
            return jsonify({"error": "Root not found"}), 404
        index = roots.indexes.for_root(handle)
        data = handle.to_dict()
        data["height"] = index.height(handle)
        data["node_count"] = index.node_count(handle)
        return jsonify(data)

    @app.route("/api/roots/<name>/entries/<key_hex>", methods=["GET"])
    def get_entry(name: str, key_hex: str):
        """Look up one key in a named root."""
        handle = roots.get_by_name(name)
        if not handle:
            return jsonify({"error": "Root not found"}), 404
        try:
            key = parse_key(key_hex)
        except ValueError as e:
            return jsonify({"error": str(e)}), 400
        trace = Trace()
        value = roots.indexes.for_root(handle).lookup(handle, key, trace)
        if value is None:
            return jsonify({"error": "Key not found"}), 404
        return jsonify(
            {
                "key": key.hex(),
                "value": base64.b64encode(value).decode("ascii"),
                "visits": trace.visits,
            }
        )

    @app.route("/api/roots/<name>/proof/<key_hex>", methods=["GET"])
    def get_proof(name: str, key_hex: str):
        """Get the Merkle proof for one key."""
        handle = roots.get_by_name(name)
        if not handle:
            return jsonify({"error": "Root not found"}), 404
        try:
            proof = roots.indexes.for_root(handle).prove(handle, parse_key(key_hex))
        except AbsentKeyError:
            return jsonify({"error": "Key not found"}), 404
        except ValueError as e:
            return jsonify({"error": str(e)}), 400
        data = proof.to_dict()
        data["digest"] = handle.root.hex()
        return jsonify(data)

    @app.route("/api/verify", methods=["POST"])
    def verify():
        """Check a proof against a root's digest (or an explicit ``digest``)."""
        data = request.get_json(silent=True) or {}
        handle = roots.get_by_name(data.get("root", ""))
        if not handle:
            return jsonify({"error": "Root not found"}), 404
        try:
            digest = bytes.fromhex(data["digest"]) if data.get("digest") else handle.root
            key = parse_key(data["key"])
            value = base64.b64decode(data["value"], validate=True)
            proof = Proof.from_dict(data["proof"])
        except (KeyError, ValueError, TypeError, binascii.Error) as e:
            return jsonify({"error": f"Invalid request: {e}"}), 400
        if digest is None:
            return jsonify({"valid": False})
        return jsonify({"valid": verify_proof(handle.kind, handle.meta, digest, key, value, proof)})

    # Comparison routes
    @app.route("/api/diff", methods=["GET"])
    def get_diff():
        """Diff two named roots."""
        a = roots.get_by_name(request.args.get("a", ""))
        b = roots.get_by_name(request.args.get("b", ""))
        if not a or not b:
            return jsonify({"error": "Root not found"}), 404
        trace = Trace()
        try:
            result = roots.indexes.for_root(a).diff(a, b, trace)
        except SiriError as e:
            if isinstance(e, CorruptionError):
                raise
            return jsonify({"error": str(e)}), 400
        data = result.to_dict()
        data["visits"] = trace.visits
        return jsonify(data)

    @app.route("/api/dedup", methods=["GET"])
    def get_dedup():
        """Deduplication report over a comma-separated list of named roots."""
        names = [n for n in request.args.get("roots", "").split(",") if n]
        handles = [roots.get_by_name(n) for n in names]
        if not handles or not all(handles):
            return jsonify({"error": "Root not found"}), 404
        return jsonify(measure(data_manager.store, handles).to_dict())

    return app


def run_server(data_manager: DataManager, host="127.0.0.1", port=5001, debug=False):
    """Run the Flask development server."""
    create_app(data_manager).run(host=host, port=port, debug=debug)
