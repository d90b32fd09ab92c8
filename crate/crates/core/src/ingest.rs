// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Publication metadata: the documents interchange file, the OpenAlex
//! client, and the minimum-publication researcher filter.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::thread;
use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Separator between a base researcher id and a clone index.
pub const CLONE_SEPARATOR: char = '#';

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Publication {
    pub pub_id: String,
    pub title: String,
    #[serde(rename = "abstract", default)]
    pub abstract_text: String,
    pub year: i32,
    pub author_ids: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    File {
        path: String,
    },
    OpenAlex {
        endpoint: String,
        institution: String,
        year_from: i32,
        year_to: i32,
    },
    Synthetic {
        seed: u64,
    },
    Memory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterRecord {
    pub min_pubs: usize,
    pub researchers_removed: usize,
    pub publications_removed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: Source,
    /// Records dropped while ingesting because they could not be parsed.
    pub malformed_skipped: usize,
    pub filter: Option<FilterRecord>,
}

impl Provenance {
    pub fn new(source: Source) -> Self {
        Provenance {
            source,
            malformed_skipped: 0,
            filter: None,
        }
    }
}

/// A validated set of publications and the per-researcher publication lists
/// derived from their author ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    publications: Vec<Publication>,
    researchers: BTreeMap<String, Vec<String>>,
    pub provenance: Provenance,
}

impl Corpus {
    /// Validates the publications and derives the researcher map. Output is
    /// sorted by pub_id.
    pub fn new(mut publications: Vec<Publication>, provenance: Provenance) -> Result<Self> {
        publications.sort_by(|a, b| a.pub_id.cmp(&b.pub_id));
        for pair in publications.windows(2) {
            if pair[0].pub_id == pair[1].pub_id {
                return Err(Error::DuplicatePublication(pair[0].pub_id.clone()));
            }
        }
        let mut researchers: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for p in &publications {
            if p.pub_id.is_empty() {
                return Err(Error::InvalidCorpus("empty pub_id".into()));
            }
            if p.author_ids.is_empty() {
                return Err(Error::InvalidCorpus(format!(
                    "publication `{}` has no authors",
                    p.pub_id
                )));
            }
            for a in &p.author_ids {
                validate_researcher_id(a)?;
                researchers
                    .entry(a.clone())
                    .or_default()
                    .push(p.pub_id.clone());
            }
        }
        Ok(Corpus {
            publications,
            researchers,
            provenance,
        })
    }

    pub fn publications(&self) -> &[Publication] {
        &self.publications
    }

    /// researcher id -> sorted, duplicate-free pub ids
    pub fn researchers(&self) -> &BTreeMap<String, Vec<String>> {
        &self.researchers
    }

    pub fn publication(&self, pub_id: &str) -> Option<&Publication> {
        self.publications
            .binary_search_by(|p| p.pub_id.as_str().cmp(pub_id))
            .ok()
            .map(|i| &self.publications[i])
    }

    pub fn pub_count(&self, researcher: &str) -> usize {
        self.researchers.get(researcher).map_or(0, Vec::len)
    }
}

fn validate_researcher_id(id: &str) -> Result<()> {
    if id.is_empty() {
        return Err(Error::InvalidCorpus("empty researcher id".into()));
    }
    if id.contains(CLONE_SEPARATOR) {
        return Err(Error::InvalidCorpus(format!(
            "researcher id `{id}` contains the reserved clone separator `{CLONE_SEPARATOR}`"
        )));
    }
    Ok(())
}

/// Drops researchers with fewer than `min_pubs` publications, strips them
/// from author lists, and drops publications left without authors.
pub fn filter_researchers(corpus: &Corpus, min_pubs: usize) -> Corpus {
    let min_pubs = min_pubs.max(1);
    let keep: BTreeSet<&str> = corpus
        .researchers
        .iter()
        .filter(|(_, pubs)| pubs.len() >= min_pubs)
        .map(|(id, _)| id.as_str())
        .collect();
    let researchers_removed = corpus.researchers.len() - keep.len();

    let mut publications = Vec::with_capacity(corpus.publications.len());
    for p in &corpus.publications {
        let authors: BTreeSet<String> = p
            .author_ids
            .iter()
            .filter(|a| keep.contains(a.as_str()))
            .cloned()
            .collect();
        if !authors.is_empty() {
            publications.push(Publication {
                author_ids: authors,
                ..p.clone()
            });
        }
    }
    let publications_removed = corpus.publications.len() - publications.len();

    let mut provenance = corpus.provenance.clone();
    provenance.filter = Some(match provenance.filter {
        Some(prev) if prev.min_pubs == min_pubs => FilterRecord {
            min_pubs,
            researchers_removed: prev.researchers_removed + researchers_removed,
            publications_removed: prev.publications_removed + publications_removed,
        },
        _ => FilterRecord {
            min_pubs,
            researchers_removed,
            publications_removed,
        },
    });

    Corpus::new(publications, provenance).expect("a filtered valid corpus stays valid")
}

/// Reads a documents file: one JSON object per line with `pub_id`, `title`,
/// `abstract`, `year`, `author_ids`. Blank lines are ignored.
pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut publications = Vec::new();
    for (record, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let value: Value = serde_json::from_str(line).map_err(|e| Error::Schema {
            record,
            field: "<record>".into(),
            message: format!("is not valid JSON: {e}"),
        })?;
        publications.push(parse_record(record, &value)?);
    }
    Corpus::new(
        publications,
        Provenance::new(Source::File {
            path: path.display().to_string(),
        }),
    )
}

fn parse_record(record: usize, value: &Value) -> Result<Publication> {
    let schema = |field: &str, message: &str| Error::Schema {
        record,
        field: field.into(),
        message: message.into(),
    };
    let obj = value
        .as_object()
        .ok_or_else(|| schema("<record>", "is not a JSON object"))?;
    let string_field = |field: &str, required: bool| -> Result<String> {
        match obj.get(field) {
            Some(Value::String(s)) => Ok(s.clone()),
            None | Some(Value::Null) if !required => Ok(String::new()),
            None => Err(schema(field, "is missing")),
            Some(_) => Err(schema(field, "must be a string")),
        }
    };
    let pub_id = string_field("pub_id", true)?;
    if pub_id.is_empty() {
        return Err(schema("pub_id", "must not be empty"));
    }
    let title = string_field("title", true)?;
    let abstract_text = string_field("abstract", false)?;
    let year = match obj.get("year") {
        Some(v) => v
            .as_i64()
            .and_then(|y| i32::try_from(y).ok())
            .ok_or_else(|| schema("year", "must be an integer year"))?,
        None => return Err(schema("year", "is missing")),
    };
    let authors = match obj.get("author_ids") {
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_owned)
                    .ok_or_else(|| schema("author_ids", "must contain only strings"))
            })
            .collect::<Result<BTreeSet<_>>>()?,
        Some(_) => return Err(schema("author_ids", "must be an array")),
        None => return Err(schema("author_ids", "is missing")),
    };
    if authors.is_empty() {
        return Err(schema("author_ids", "must not be empty"));
    }
    for a in &authors {
        if a.is_empty() || a.contains(CLONE_SEPARATOR) {
            return Err(schema(
                "author_ids",
                &format!("contains invalid researcher id `{a}`"),
            ));
        }
    }
    Ok(Publication {
        pub_id,
        title,
        abstract_text,
        year,
        author_ids: authors,
    })
}

/// Writes the documents file, one record per line in pub_id order.
pub fn write_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    crate::io::write_bytes(path, &corpus_bytes(corpus))
}

pub fn corpus_bytes(corpus: &Corpus) -> Vec<u8> {
    let mut out = Vec::new();
    for p in &corpus.publications {
        serde_json::to_writer(&mut out, p).expect("in-memory serialization cannot fail");
        out.write_all(b"\n").unwrap();
    }
    out
}

/// Rebuilds abstract text from OpenAlex's `abstract_inverted_index`
/// (word -> positions) by joining words in position order. Returns `None`
/// when the index is structurally malformed.
pub fn reconstruct_abstract(index: &Map<String, Value>) -> Option<String> {
    let mut slots: Vec<(u64, &str)> = Vec::new();
    for (word, positions) in index {
        for pos in positions.as_array()? {
            slots.push((pos.as_u64()?, word.as_str()));
        }
    }
    // Word as a secondary key keeps duplicate positions independent of map order.
    slots.sort_unstable();
    Some(
        slots
            .into_iter()
            .map(|(_, w)| w)
            .collect::<Vec<_>>()
            .join(" "),
    )
}

#[derive(Debug, Clone)]
pub struct OpenAlexConfig {
    pub endpoint: String,
    pub per_page: usize,
    pub max_retries: u32,
    /// First retry delay; doubles on each further attempt.
    pub backoff_base: Duration,
    pub timeout: Duration,
    pub mailto: Option<String>,
    pub api_key: Option<String>,
}

pub const OPENALEX_ENDPOINT: &str = "https://api.openalex.org";
pub const ENV_MAILTO: &str = "OPENALEX_MAILTO";
pub const ENV_API_KEY: &str = "OPENALEX_API_KEY";

impl Default for OpenAlexConfig {
    fn default() -> Self {
        OpenAlexConfig {
            endpoint: OPENALEX_ENDPOINT.into(),
            per_page: 200,
            max_retries: 3,
            backoff_base: Duration::from_secs(1),
            timeout: Duration::from_secs(30),
            mailto: None,
            api_key: None,
        }
    }
}

impl OpenAlexConfig {
    /// Defaults with the polite-pool email and API key taken from the
    /// environment when set.
    pub fn from_env(endpoint: Option<&str>) -> Self {
        let mut cfg = OpenAlexConfig::default();
        if let Some(e) = endpoint {
            cfg.endpoint = e.trim_end_matches('/').to_owned();
        }
        cfg.mailto = std::env::var(ENV_MAILTO).ok().filter(|s| !s.is_empty());
        cfg.api_key = std::env::var(ENV_API_KEY).ok().filter(|s| !s.is_empty());
        cfg
    }
}

const OPENALEX_ID_PREFIX: &str = "https://openalex.org/";

fn short_id(id: &str) -> &str {
    id.strip_prefix(OPENALEX_ID_PREFIX).unwrap_or(id)
}

/// Converts one work into a publication. Only authors affiliated with
/// `institution` are kept. `Ok(None)` means the work has no affiliated
/// author; `Err(reason)` means the record is malformed.
fn parse_work(work: &Value, institution: &str) -> Result<Option<Publication>, String> {
    let id = work.get("id").and_then(Value::as_str).ok_or("missing id")?;
    let title = work
        .get("title")
        .and_then(Value::as_str)
        .or_else(|| work.get("display_name").and_then(Value::as_str))
        .ok_or("missing title")?;
    let year = work
        .get("publication_year")
        .and_then(Value::as_i64)
        .and_then(|y| i32::try_from(y).ok())
        .ok_or("missing publication_year")?;
    let abstract_text = match work.get("abstract_inverted_index") {
        None | Some(Value::Null) => String::new(),
        Some(Value::Object(index)) => {
            reconstruct_abstract(index).ok_or("malformed abstract_inverted_index")?
        }
        Some(_) => return Err("malformed abstract_inverted_index".into()),
    };
    let authorships = work
        .get("authorships")
        .and_then(Value::as_array)
        .ok_or("missing authorships")?;
    let mut author_ids = BTreeSet::new();
    for a in authorships {
        let Some(author) = a.pointer("/author/id").and_then(Value::as_str) else {
            continue;
        };
        let affiliated = a
            .get("institutions")
            .and_then(Value::as_array)
            .is_some_and(|insts| {
                insts.iter().any(|i| {
                    i.get("id")
                        .and_then(Value::as_str)
                        .is_some_and(|iid| short_id(iid) == institution)
                })
            });
        if affiliated {
            let aid = short_id(author);
            if aid.is_empty() || aid.contains(CLONE_SEPARATOR) {
                return Err(format!("invalid author id `{aid}`"));
            }
            author_ids.insert(aid.to_owned());
        }
    }
    if author_ids.is_empty() {
        return Ok(None);
    }
    Ok(Some(Publication {
        pub_id: short_id(id).to_owned(),
        title: title.to_owned(),
        abstract_text,
        year,
        author_ids,
    }))
}

fn get_with_retry(
    client: &reqwest::blocking::Client,
    url: &str,
    query: &[(&str, String)],
    cfg: &OpenAlexConfig,
) -> Result<Value> {
    let mut last_status = None;
    let mut last_message = String::new();
    for attempt in 0..=cfg.max_retries {
        if attempt > 0 {
            thread::sleep(cfg.backoff_base * 2u32.saturating_pow(attempt - 1));
        }
        match client.get(url).query(query).send() {
            Ok(resp) => {
                let status = resp.status();
                last_status = Some(status.as_u16());
                if status.is_success() {
                    return resp.json::<Value>().map_err(|e| Error::Transport {
                        status: last_status,
                        message: format!("invalid JSON body: {e}"),
                    });
                }
                last_message = format!("HTTP {status}");
                let retryable = status.as_u16() == 429 || status.is_server_error();
                if !retryable {
                    break;
                }
                warn!(
                    "OpenAlex request failed with {status}, attempt {}",
                    attempt + 1
                );
            }
            Err(e) => {
                last_message = e.to_string();
                warn!("OpenAlex request error: {e}, attempt {}", attempt + 1);
            }
        }
    }
    Err(Error::Transport {
        status: last_status,
        message: last_message,
    })
}

/// Retrieves every work with an author affiliated with `institution` (an
/// OpenAlex institution id such as `I118792284`) published within
/// `year_range`, following cursor pagination until exhaustion.
pub fn fetch_openalex(
    institution: &str,
    year_range: (i32, i32),
    cfg: &OpenAlexConfig,
) -> Result<Corpus> {
    let (from, to) = year_range;
    if from > to {
        return Err(Error::Config(format!("year range {from}..{to} is empty")));
    }
    let institution = short_id(institution);
    let client = reqwest::blocking::Client::builder()
        .timeout(cfg.timeout)
        .user_agent(concat!("scholarnet/", env!("CARGO_PKG_VERSION")))
        .build()
        .map_err(|e| Error::Transport {
            status: None,
            message: e.to_string(),
        })?;
    let url = format!("{}/works", cfg.endpoint.trim_end_matches('/'));

    let mut by_id: BTreeMap<String, Publication> = BTreeMap::new();
    let mut malformed = 0;
    let mut cursor = "*".to_owned();
    loop {
        let mut query = vec![
            (
                "filter",
                format!("authorships.institutions.id:{institution},publication_year:{from}-{to}"),
            ),
            ("per-page", cfg.per_page.to_string()),
            ("cursor", cursor.clone()),
        ];
        if let Some(m) = &cfg.mailto {
            query.push(("mailto", m.clone()));
        }
        if let Some(k) = &cfg.api_key {
            query.push(("api_key", k.clone()));
        }
        let page = get_with_retry(&client, &url, &query, cfg)?;
        let results = page
            .get("results")
            .and_then(Value::as_array)
            .map(Vec::as_slice)
            .unwrap_or_default();
        for work in results {
            match parse_work(work, institution) {
                Ok(Some(p)) if (from..=to).contains(&p.year) => {
                    by_id.entry(p.pub_id.clone()).or_insert(p);
                }
                Ok(_) => {}
                Err(reason) => {
                    malformed += 1;
                    warn!("skipping malformed OpenAlex record: {reason}");
                }
            }
        }
        match page.pointer("/meta/next_cursor").and_then(Value::as_str) {
            Some(next) if !results.is_empty() => cursor = next.to_owned(),
            _ => break,
        }
    }

    let mut provenance = Provenance::new(Source::OpenAlex {
        endpoint: cfg.endpoint.clone(),
        institution: institution.to_owned(),
        year_from: from,
        year_to: to,
    });
    provenance.malformed_skipped = malformed;
    Corpus::new(by_id.into_values().collect(), provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    fn publication(id: &str, authors: &[&str]) -> Publication {
        Publication {
            pub_id: id.into(),
            title: format!("title {id}"),
            abstract_text: String::new(),
            year: 2010,
            author_ids: authors.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn corpus(pubs: Vec<Publication>) -> Corpus {
        Corpus::new(pubs, Provenance::new(Source::Memory)).unwrap()
    }

    #[test]
    fn inverted_index_joins_by_position() {
        let idx = json!({"deep": [0], "learning": [1, 3], "for": [2]});
        let text = reconstruct_abstract(idx.as_object().unwrap()).unwrap();
        assert_eq!(text, "deep learning for learning");
    }

    #[test]
    fn inverted_index_rejects_non_integer_positions() {
        let idx = json!({"deep": ["zero"]});
        assert!(reconstruct_abstract(idx.as_object().unwrap()).is_none());
    }

    #[test]
    fn filter_drops_small_researchers() {
        let mut pubs = Vec::new();
        for i in 0..6 {
            pubs.push(publication(&format!("a{i}"), &["A"]));
        }
        for i in 0..3 {
            pubs.push(publication(&format!("b{i}"), &["B"]));
        }
        let c = corpus(pubs);
        let f = filter_researchers(&c, 5);
        assert_eq!(f.researchers().keys().collect::<Vec<_>>(), vec!["A"]);
        assert_eq!(f.publications().len(), 6);
        let rec = f.provenance.filter.unwrap();
        assert_eq!(rec.researchers_removed, 1);
        assert_eq!(rec.publications_removed, 3);
    }

    #[test]
    fn four_publications_is_below_five() {
        let pubs = (0..4)
            .map(|i| publication(&format!("p{i}"), &["A"]))
            .collect();
        assert!(filter_researchers(&corpus(pubs), 5)
            .researchers()
            .is_empty());
    }

    #[test]
    fn filter_keeps_shared_publications_for_remaining_authors() {
        let mut pubs: Vec<_> = (0..5)
            .map(|i| publication(&format!("a{i}"), &["A"]))
            .collect();
        pubs.push(publication("shared", &["A", "B"]));
        let f = filter_researchers(&corpus(pubs), 5);
        let shared = f.publication("shared").unwrap();
        assert_eq!(shared.author_ids.iter().collect::<Vec<_>>(), vec!["A"]);
    }

    #[test]
    fn min_pubs_one_is_identity_on_content() {
        let pubs = vec![publication("x", &["A"]), publication("y", &["A", "B"])];
        let c = corpus(pubs);
        let f = filter_researchers(&c, 1);
        assert_eq!(f.publications(), c.publications());
        assert_eq!(f.researchers(), c.researchers());
    }

    #[test]
    fn corpus_rejects_duplicates_and_clone_separator() {
        let err = Corpus::new(
            vec![publication("x", &["A"]), publication("x", &["B"])],
            Provenance::new(Source::Memory),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DuplicatePublication(ref id) if id == "x"));
        let err = Corpus::new(
            vec![publication("x", &["A#1"])],
            Provenance::new(Source::Memory),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidCorpus(_)));
    }

    #[test]
    fn work_parsing_keeps_affiliated_authors() {
        let work = json!({
            "id": "https://openalex.org/W1",
            "title": "A title",
            "publication_year": 2012,
            "abstract_inverted_index": null,
            "authorships": [
                {"author": {"id": "https://openalex.org/A1"},
                 "institutions": [{"id": "https://openalex.org/I9"}]},
                {"author": {"id": "https://openalex.org/A2"},
                 "institutions": [{"id": "https://openalex.org/I7"}]}
            ]
        });
        let p = parse_work(&work, "I9").unwrap().unwrap();
        assert_eq!(p.pub_id, "W1");
        assert_eq!(p.abstract_text, "");
        assert_eq!(p.author_ids.iter().collect::<Vec<_>>(), vec!["A1"]);
        assert!(parse_work(&json!({"id": "W2"}), "I9").is_err());
    }

    fn arb_corpus() -> impl Strategy<Value = Corpus> {
        prop::collection::vec(prop::collection::btree_set(0u8..8, 1..4), 1..40).prop_map(|rows| {
            let pubs = rows
                .into_iter()
                .enumerate()
                .map(|(i, authors)| Publication {
                    pub_id: format!("p{i:03}"),
                    title: String::new(),
                    abstract_text: String::new(),
                    year: 2000,
                    author_ids: authors.into_iter().map(|a| format!("R{a}")).collect(),
                })
                .collect();
            corpus(pubs)
        })
    }

    proptest! {
        #[test]
        fn filter_is_idempotent(c in arb_corpus(), min_pubs in 1usize..8) {
            let once = filter_researchers(&c, min_pubs);
            let twice = filter_researchers(&once, min_pubs);
            prop_assert_eq!(&once, &twice);
            for pubs in once.researchers().values() {
                prop_assert!(pubs.len() >= min_pubs);
            }
        }

        #[test]
        fn abstract_is_key_order_invariant(words in prop::collection::vec("[a-z]{1,6}", 1..12)) {
            let mut forward = Map::new();
            let mut backward = Map::new();
            let mut grouped: BTreeMap<String, Vec<usize>> = BTreeMap::new();
            for (i, w) in words.iter().enumerate() {
                grouped.entry(w.clone()).or_default().push(i);
            }
            for (w, pos) in &grouped {
                forward.insert(w.clone(), json!(pos));
            }
            for (w, pos) in grouped.iter().rev() {
                backward.insert(w.clone(), json!(pos));
            }
            let a = reconstruct_abstract(&forward).unwrap();
            let b = reconstruct_abstract(&backward).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a, words.join(" "));
        }
    }
}
