"""Regenerates the sample corpus, embeddings, dictionary and mock scripts.

The sentences are synthetic clinical-style text built from templates; the
embeddings are hashed bag-of-words vectors, good enough to exercise kNN
selection but not a real encoder.
"""
import hashlib
import json
import math
import random
from pathlib import Path

HERE = Path(__file__).resolve().parent
DIM = 32

TESTS = ["chest x-ray", "CT scan", "blood culture", "echocardiogram", "urinalysis", "MRI",
         "lipid panel", "biopsy", "EKG", "troponin level", "liver function tests", "ultrasound"]
TREATMENTS = ["metformin", "insulin", "aspirin", "heparin", "lisinopril", "vancomycin",
              "physical therapy", "furosemide", "amoxicillin", "oxygen therapy", "prednisone", "surgery"]
PROBLEMS = ["pneumonia", "hypertension", "type 2 diabetes", "atrial fibrillation", "sepsis",
            "chest pain", "renal failure", "anemia", "cellulitis", "heart failure", "fever", "asthma"]

# Each template holds exactly two slots.
TEMPLATES = [
    ("A {test} was ordered to evaluate {problem} .", "test", "problem"),
    ("The patient was started on {treatment} for {problem} .", "treatment", "problem"),
    ("{test} showed no evidence of {problem} on admission .", "test", "problem"),
    ("She received {treatment} after the {test} came back abnormal .", "treatment", "test"),
    ("He has a history of {problem} managed with {treatment} .", "problem", "treatment"),
    ("Given worsening {problem} , we continued {treatment} overnight .", "problem", "treatment"),
    ("Repeat {test} was unremarkable and {treatment} was stopped .", "test", "treatment"),
    ("Her {problem} improved after two days of {treatment} .", "problem", "treatment"),
]

POOLS = {"test": TESTS, "treatment": TREATMENTS, "problem": PROBLEMS}

DEFINITIONS = {
    "chest x-ray": "radiograph of the chest used to image the heart, lungs and bones of the thorax",
    "CT scan": "computed tomography imaging built from many X-ray projections",
    "blood culture": "laboratory test that checks blood for bacteria or fungi",
    "echocardiogram": "ultrasound examination of the heart",
    "urinalysis": "physical, chemical and microscopic examination of urine",
    "MRI": "magnetic resonance imaging",
    "lipid panel": "blood test measuring cholesterol and triglycerides",
    "biopsy": "removal of tissue for microscopic examination",
    "EKG": "electrocardiogram, a recording of the electrical activity of the heart",
    "troponin level": "blood measurement of a cardiac muscle protein released after heart injury",
    "liver function tests": "blood tests assessing liver enzymes, proteins and bilirubin",
    "ultrasound": "imaging with high-frequency sound waves",
    "metformin": "oral biguanide drug that lowers blood glucose",
    "insulin": "hormone given to lower blood glucose",
    "aspirin": "salicylate drug used for pain, fever and platelet inhibition",
    "heparin": "injectable anticoagulant",
    "lisinopril": "ACE inhibitor used to treat high blood pressure",
    "vancomycin": "glycopeptide antibiotic",
    "physical therapy": "treatment that restores movement and function through exercise",
    "furosemide": "loop diuretic",
    "amoxicillin": "penicillin-class antibiotic",
    "oxygen therapy": "administration of supplemental oxygen",
    "prednisone": "oral corticosteroid",
    "surgery": "treatment by operative manual or instrumental techniques",
    "pneumonia": "infection that inflames the air sacs of the lungs",
    "hypertension": "persistently high arterial blood pressure",
    "type 2 diabetes": "chronic condition of insulin resistance and high blood glucose",
    "atrial fibrillation": "irregular, often rapid heart rhythm originating in the atria",
    "sepsis": "life-threatening organ dysfunction caused by a dysregulated response to infection",
    "chest pain": "pain or discomfort felt in the chest",
    "renal failure": "loss of the kidneys' ability to filter waste from the blood",
    "anemia": "deficiency of red blood cells or hemoglobin",
    "cellulitis": "bacterial infection of the deeper layers of the skin",
    "heart failure": "inability of the heart to pump enough blood for the body's needs",
    "fever": "body temperature above the normal range",
    "asthma": "chronic inflammatory disease of the airways",
}


def sentence(rng):
    while True:
        template, a, b = rng.choice(TEMPLATES)
        fill = {a: rng.choice(POOLS[a]), b: rng.choice(POOLS[b])}
        tokens, labels = [], []
        for piece in template.split():
            if piece.startswith("{"):
                kind = piece[1:-1]
                words = fill[kind].split()
                tokens += words
                labels += ["B-" + kind] + ["I-" + kind] * (len(words) - 1)
            else:
                tokens.append(piece)
                labels.append("O")
        # Keep sentences where each mention's words occur exactly once.
        text = " " + " ".join(tokens).lower() + " "
        if all(text.count(" " + v.lower() + " ") == 1 for v in fill.values()):
            return tokens, labels


def write_conll(path, sentences):
    with open(path, "w") as f:
        for tokens, labels in sentences:
            for t, l in zip(tokens, labels):
                f.write(f"{t}\t{l}\n")
            f.write("\n")


def embed(tokens):
    v = [0.0] * DIM
    for t in tokens:
        h = hashlib.sha256(t.lower().encode()).digest()
        v[h[0] % DIM] += 1.0 if h[1] % 2 else -1.0
        v[h[2] % DIM] += 0.5
    norm = math.sqrt(sum(x * x for x in v)) or 1.0
    return [round(x / norm, 6) for x in v]


def main():
    rng = random.Random(20240601)
    seen = set()
    def fresh():
        while True:
            tokens, labels = sentence(rng)
            if tuple(tokens) not in seen:
                seen.add(tuple(tokens))
                return tokens, labels
    train = [fresh() for _ in range(60)]
    test = [fresh() for _ in range(50)]
    write_conll(HERE / "train.conll", train)
    write_conll(HERE / "test.conll", test)
    with open(HERE / "embeddings.jsonl", "w") as f:
        for split, sents in (("train", train), ("test", test)):
            for i, (tokens, _) in enumerate(sents):
                rec = {"id": f"{split}-{i}", "vector": embed(tokens), "encoder": "hashed-bow-32"}
                f.write(json.dumps(rec) + "\n")
    with open(HERE / "dictionary.jsonl", "w") as f:
        for term, definition in DEFINITIONS.items():
            f.write(json.dumps({"term": term, "definition": definition, "source": "sample"}) + "\n")
    (HERE / "empty_dictionary.jsonl").write_text("")


if __name__ == "__main__":
    main()
