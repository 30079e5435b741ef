# The remote oracle protocol: the same client the pipeline uses for a real
# model service, exercised here against an in-process service instance with
# the deterministic toy backend.
#
# Requires the service package: pip install -e ./service --no-build-isolation

from fastapi.testclient import TestClient
from prompt_service import ToyMaskedLM, create_app

from ruledistill import RemoteOracle
from ruledistill.oracle import FineTuneRecord

client = TestClient(create_app(backend=ToyMaskedLM()))
oracle = RemoteOracle("http://testserver", client=client, poll_interval=0.02)

masks = oracle.fill(
    "T1", "Thirty [mask] such as PD patients participated in the study", 1, 5
)
print("fill-mask top-5 before fine-tuning:")
for token, prob in masks[0]:
    print("  %-12s %.4f" % (token, prob))

records = [
    FineTuneRecord(
        chunk_text="pd",
        label="disease",
        t3_text="Thirty PD patients PD is [mask] [mask] entity",
        t3_answer=("a", "disease"),
        t4_text="Thirty PD patients PD [s] [s] [s] [s] [mask] [s]",
        t4_answer=("disease",),
    ),
    FineTuneRecord(
        chunk_text="the study",
        label="NA",
        t3_text="Thirty PD patients the study is [mask] [mask] entity",
        t3_answer=("not", "an"),
        t4_text="Thirty PD patients the study [s] [s] [s] [s] [mask] [s]",
        t4_answer=("none",),
    ),
]
oracle.finetune(records, epochs=3)
print("\nfine-tune job completed")

masks = oracle.fill("T4", "Thirty PD patients PD [s] [s] [s] [s] [mask] [s]", 1, 3)
print("\nfill-mask top-3 after fine-tuning (T4 position):")
for token, prob in masks[0]:
    print("  %-12s %.4f" % (token, prob))
