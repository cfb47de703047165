# Writes ../../fixtures/golden_frames.records: one canonical frame per
# message type, built without the Rust code. Run with: python3 golden_frames.py
import hashlib, json, os, struct

M = (1 << 64) - 1

def canon(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)

def frame(obj):
    payload = canon(obj).encode()
    return (struct.pack(">I", len(payload)) + payload).hex()

def sha(b):
    return hashlib.sha256(b).digest()

def root_seed(master, key):
    return int.from_bytes(sha(master + b"\x1f" + key.encode())[:8], "big")

def subseed(root, purpose, index):
    return int.from_bytes(sha(struct.pack(">Q", root) + purpose.encode() + struct.pack(">Q", index))[:8], "big")

def sm_next(s):
    s = (s + 0x9E3779B97F4A7C15) & M
    z = s
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M
    return s, z ^ (z >> 31)

def perm(n, seed):
    p = list(range(n)); s = seed
    for j in range(n - 1, 0, -1):
        s, r = sm_next(s)
        i = r % (j + 1)
        p[i], p[j] = p[j], p[i]
    return p

def chain(seed, idx):
    d = sha(struct.pack(">Q", seed))
    for i in idx:
        d = sha(d + struct.pack(">Q", i))
    return d.hex()

challenge = "golden"
n = 10
manifest = {
    "challenge_id": challenge,
    "item_count": n,
    "item_digests": [sha(f"{challenge}/{i}".encode()).hex() for i in range(n)],
    "train_fraction": "4/5",
}
manifest_digest = sha(canon(manifest).encode()).hex()

spec = {
    "artifact": "torch-buggy",
    "bug_identifier": "study-pr31433",
    "challenge": challenge,
    "epochs": 30,
    "evaluation_type": "buggy",
    "model": "lenet5",
    "planned_runs": 50,
    "software": "torch",
    "state": "0",
}
key = "study-pr31433/buggy"
root = root_seed(b"", key)
split_seed = subseed(root, "split", 0)
client_seed = subseed(root, "client-rng", 0)
p = perm(n, split_seed)
train, test = p[:8], p[8:]

messages = [
    ("hello", {"type": "HELLO", "protocol_version": 1}),
    ("hello_ack", {"type": "HELLO_ACK", "protocol_version": 1}),
    ("register", {"type": "REGISTER", "experiment": spec}),
    ("registered", {"type": "REGISTERED", "root_seed": str(root), "split_seed": str(split_seed), "client_rng_seed": str(client_seed)}),
    ("request_split", {"type": "REQUEST_SPLIT", "experiment_key": key, "run_index": 0, "echoed_seed": str(root)}),
    ("split", {"type": "SPLIT", "run_index": 0, "train_indices": train, "test_indices": test,
               "train_checksum": chain(split_seed, train), "test_checksum": chain(split_seed, test),
               "manifest_digest": manifest_digest}),
    ("submit_metrics", {"type": "SUBMIT_METRICS", "experiment_key": key, "run_index": 0,
                        "accuracy": "0.7", "precision": "0.6875", "recall": "0.71", "f1": "0.6985"}),
    ("metrics_ack", {"type": "METRICS_ACK", "run_index": 0}),
    ("error", {"type": "ERROR", "code": "SEED_MISMATCH", "detail": "echoed seed does not match"}),
]

out = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "..", "fixtures", "golden_frames.records")
with open(out, "w") as f:
    for name, msg in messages:
        f.write(canon({"name": name, "frame": frame(msg)}) + "\n")
print(f"wrote {len(messages)} frames")
