//! Regenerates the committed demo dataset under data/demo: a four-passage
//! corpus (two passages support the question, two are district-themed
//! distractors), one labeled query, recorded extraction responses for
//! every prompt the run will issue, and a config wiring them together.
//!
//! The question needs a hop the corpus never states in one place: the
//! passage about the footballer Alhandra names his birthplace, and the
//! passage about Vila Franca de Xira never mentions him. Ranking both
//! supporting passages in the top 2 therefore requires walking the graph,
//! which is the behavior the demo exists to show.
//!
//! The QA response is keyed by the exact passages the reader will see, so
//! this generator first builds a throwaway index, runs the query, and
//! derives the key from the real ranking before writing fixtures.

use std::collections::BTreeMap;
use std::path::Path;

use hippograph::config::{DenseSpec, EmbeddingSpec, ExtractionSpec};
use hippograph::corpus::Passage;
use hippograph::extract::fixture::{passage_ner_key, passage_openie_key, qa_key, query_ner_key};
use hippograph::extract::FixtureBackend;
use hippograph::pipeline;
use hippograph::retrieval::{retrieve, QueryBackends};
use hippograph::RunConfig;

const QUESTION: &str = "In which district was Alhandra born?";
const ANSWER: &str = "Vila Franca de Xira";

struct DemoPassage {
    passage: Passage,
    ner: &'static str,
    openie: &'static str,
    /// Entity list as the NER response parses, needed to key the OpenIE
    /// prompt that is conditioned on it.
    entities: &'static [&'static str],
}

fn passages() -> Vec<DemoPassage> {
    vec![
        DemoPassage {
            passage: Passage {
                id: "alhandra".into(),
                title: "Alhandra (footballer)".into(),
                text: "Vítor Manuel Martins, known as Alhandra, is a Portuguese former \
                       footballer who played as a left back. He was born in Vila Franca \
                       de Xira in 1979."
                    .into(),
            },
            ner: r#"{"named_entities": ["Vítor Manuel Martins", "Alhandra", "Vila Franca de Xira", "1979"]}"#,
            openie: r#"{"triples": [
                ["Vítor Manuel Martins", "is known as", "Alhandra"],
                ["Alhandra", "is", "Portuguese former footballer"],
                ["Alhandra", "played as", "left back"],
                ["Alhandra", "was born in", "Vila Franca de Xira"],
                ["Alhandra", "was born in", "1979"]
            ]}"#,
            entities: &["vítor manuel martins", "alhandra", "vila franca de xira", "1979"],
        },
        DemoPassage {
            passage: Passage {
                id: "vila-franca-de-xira".into(),
                title: "Vila Franca de Xira".into(),
                text: "Vila Franca de Xira is a municipality in the Lisbon metropolitan \
                       area of Portugal. The town lies on the right bank of the Tagus \
                       River and is known for its bullfighting traditions."
                    .into(),
            },
            ner: r#"{"named_entities": ["Vila Franca de Xira", "Lisbon", "Portugal", "Tagus River"]}"#,
            openie: r#"{"triples": [
                ["Vila Franca de Xira", "is municipality in", "Lisbon metropolitan area"],
                ["Lisbon metropolitan area", "is part of", "Portugal"],
                ["Vila Franca de Xira", "lies on", "Tagus River"],
                ["Vila Franca de Xira", "is known for", "bullfighting traditions"]
            ]}"#,
            entities: &["vila franca de xira", "lisbon", "portugal", "tagus river"],
        },
        DemoPassage {
            passage: Passage {
                id: "jaar".into(),
                title: "Ja'ar".into(),
                text: "Ja'ar is the largest town of the Khanfar District in the Abyan \
                       Governorate of Yemen. The town grew around cotton plantations \
                       during the twentieth century."
                    .into(),
            },
            ner: r#"{"named_entities": ["Ja'ar", "Khanfar District", "Abyan Governorate", "Yemen"]}"#,
            openie: r#"{"triples": [
                ["Ja'ar", "is largest town of", "Khanfar District"],
                ["Khanfar District", "is located in", "Abyan Governorate"],
                ["Abyan Governorate", "is part of", "Yemen"],
                ["Ja'ar", "grew around", "cotton plantations"]
            ]}"#,
            entities: &["ja'ar", "khanfar district", "abyan governorate", "yemen"],
        },
        DemoPassage {
            passage: Passage {
                id: "povoa-de-santa-iria".into(),
                title: "Póvoa de Santa Iria".into(),
                text: "Póvoa de Santa Iria is a city in Portugal. It was a civil parish \
                       until 2013, when it merged with Forte da Casa as part of a \
                       district reorganization."
                    .into(),
            },
            ner: r#"{"named_entities": ["Póvoa de Santa Iria", "Portugal", "Forte da Casa", "2013"]}"#,
            openie: r#"{"triples": [
                ["Póvoa de Santa Iria", "is city in", "Portugal"],
                ["Póvoa de Santa Iria", "merged with", "Forte da Casa"],
                ["Póvoa de Santa Iria", "was civil parish until", "2013"]
            ]}"#,
            entities: &["póvoa de santa iria", "portugal", "forte da casa", "2013"],
        },
    ]
}

fn base_fixtures(demo: &[DemoPassage]) -> FixtureBackend {
    let mut fixtures = FixtureBackend::default();
    for entry in demo {
        let input = entry.passage.prompt_input();
        let entities: Vec<String> = entry.entities.iter().map(|e| e.to_string()).collect();
        fixtures.insert(passage_ner_key(&input), entry.ner);
        fixtures.insert(passage_openie_key(&input, &entities), entry.openie);
    }
    fixtures.insert(query_ner_key(QUESTION), r#"{"named_entities": ["Alhandra"]}"#);
    fixtures
}

fn demo_config(root: &Path) -> RunConfig {
    RunConfig {
        corpus: Some(root.join("data/demo/corpus.jsonl")),
        queries: Some(root.join("data/demo/queries.jsonl")),
        index_dir: Some(root.join("data/demo/index")),
        extraction: ExtractionSpec {
            fixtures: Some(root.join("data/demo/fixtures.jsonl")),
            ..Default::default()
        },
        embedding: EmbeddingSpec {
            dimension: 64,
            seed: 42,
            ..Default::default()
        },
        dense: Some(DenseSpec::default()),
        qa: true,
        ..Default::default()
    }
}

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let demo_dir = root.join("data/demo");
    std::fs::create_dir_all(&demo_dir).expect("create data/demo");

    let demo = passages();
    let corpus_lines: Vec<String> = demo
        .iter()
        .map(|entry| serde_json::to_string(&entry.passage).unwrap())
        .collect();
    std::fs::write(demo_dir.join("corpus.jsonl"), corpus_lines.join("\n") + "\n")
        .expect("write corpus");

    let query = serde_json::json!({
        "id": "alhandra-district",
        "question": QUESTION,
        "answers": [ANSWER],
        "gold_ids": ["alhandra", "vila-franca-de-xira"],
    });
    std::fs::write(demo_dir.join("queries.jsonl"), format!("{query}\n")).expect("write queries");

    let mut fixtures = base_fixtures(&demo);
    fixtures
        .save(&demo_dir.join("fixtures.jsonl"))
        .expect("write fixtures");

    // Build a throwaway index and run the question for real, so the QA
    // fixture is keyed by the passages the reader will actually receive.
    let scratch = tempfile::tempdir().expect("scratch dir");
    let mut probe_config = demo_config(&root);
    probe_config.index_dir = Some(scratch.path().to_path_buf());
    let index = pipeline::build_index(&probe_config).expect("build probe index");
    let extractor = pipeline::build_extractor(&probe_config).expect("extractor");
    let embedder = pipeline::build_embedder(&probe_config).expect("embedder");
    let backends = QueryBackends {
        extractor: &extractor,
        embedder: &embedder,
        dense: None,
    };
    let options = pipeline::retrieve_options(&probe_config);
    let result = retrieve(QUESTION, &index, &backends, &options).expect("retrieve");

    let reader_inputs: Vec<String> = result
        .order
        .iter()
        .take(5)
        .map(|&p| index.corpus().passages()[p as usize].prompt_input())
        .collect();
    println!("ranking over the probe index:");
    for &p in &result.order {
        let passage = &index.corpus().passages()[p as usize];
        println!("  {}  {:.6}", passage.id, result.passage_scores[p as usize]);
    }
    fixtures.insert(
        qa_key(QUESTION, &reader_inputs),
        format!(
            "The first passage says Alhandra was born in Vila Franca de Xira, and the \
             second confirms it is the district in question.\nAnswer: {ANSWER}"
        ),
    );
    fixtures
        .save(&demo_dir.join("fixtures.jsonl"))
        .expect("rewrite fixtures with the QA response");

    // The committed config uses repo-relative paths; runs start at the
    // repo root.
    let config = serde_json::json!({
        "corpus": "data/demo/corpus.jsonl",
        "queries": "data/demo/queries.jsonl",
        "index_dir": "data/demo/index",
        "extraction": {"fixtures": "data/demo/fixtures.jsonl"},
        "embedding": {"dimension": 64, "seed": 42},
        "dense": BTreeMap::<String, String>::new(),
        "qa": true,
    });
    std::fs::write(
        demo_dir.join("config.json"),
        serde_json::to_string_pretty(&config).unwrap() + "\n",
    )
    .expect("write config");

    println!("demo data written to {}", demo_dir.display());
}
