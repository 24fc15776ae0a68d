//! Ground-truth protocol: candidate sampling, annotator consensus, LLM
//! labeling with a prompt template, labeler-vs-human agreement, and
//! relevance grading of the final slates.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::Duration;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{Judgment, Locale, ProviderId, Record, SlateExample, SlateItem, TopicId};
use crate::error::{Error, Result};
use crate::metrics::precision_recall;
use crate::weak::{top_k, RankedSlate};

/// Positives taken from the previous iteration's ranking.
pub const DEFAULT_POSITIVES: usize = 30;
pub const MIN_NEGATIVES: usize = 10;
pub const MAX_NEGATIVES: usize = 15;
/// Precision and recall both need to reach this for the labeler to pass.
pub const AGREEMENT_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSet {
    pub topic: TopicId,
    pub locale: Locale,
    pub positives: Vec<ProviderId>,
    pub negatives: Vec<ProviderId>,
    pub seed: u64,
    /// How many requested negatives the pool could not supply.
    pub shortfall: usize,
}

impl Record for CandidateSet {}

impl CandidateSet {
    /// All candidates in ascending id order.
    pub fn all_sorted(&self) -> Vec<&ProviderId> {
        let mut all: Vec<&ProviderId> = self.positives.iter().chain(&self.negatives).collect();
        all.sort();
        all
    }
}

/// Top positives from `weak_slate` plus `n_neg` random negatives from the
/// rest of `provider_pool`, drawn without replacement.
pub fn sample_candidates(
    weak_slate: &RankedSlate,
    provider_pool: &[ProviderId],
    n_neg: usize,
    seed: u64,
) -> Result<CandidateSet> {
    sample_candidates_with(weak_slate, provider_pool, DEFAULT_POSITIVES, n_neg, seed)
}

pub fn sample_candidates_with(
    weak_slate: &RankedSlate,
    provider_pool: &[ProviderId],
    n_pos: usize,
    n_neg: usize,
    seed: u64,
) -> Result<CandidateSet> {
    if !(MIN_NEGATIVES..=MAX_NEGATIVES).contains(&n_neg) {
        return Err(Error::Parameter(format!(
            "negatives per topic must be in [{MIN_NEGATIVES}, {MAX_NEGATIVES}], got {n_neg}"
        )));
    }
    let pool: BTreeSet<&ProviderId> = provider_pool.iter().collect();
    if let Some(p) = weak_slate.providers().find(|p| !pool.contains(p)) {
        return Err(Error::Input(format!(
            "slate provider `{p}` is not in the provider pool"
        )));
    }
    let positives: Vec<ProviderId> = top_k(weak_slate, n_pos)?.providers().cloned().collect();
    let taken: BTreeSet<&ProviderId> = positives.iter().collect();
    let eligible: Vec<&ProviderId> = pool.into_iter().filter(|p| !taken.contains(p)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = n_neg.min(eligible.len());
    let negatives: Vec<ProviderId> = eligible
        .choose_multiple(&mut rng, draw)
        .map(|p| (*p).clone())
        .collect();
    let shortfall = n_neg - draw;
    if shortfall > 0 {
        log::warn!(
            "({}, {}): only {draw} negatives available, {shortfall} short",
            weak_slate.topic,
            weak_slate.locale
        );
    }
    Ok(CandidateSet {
        topic: weak_slate.topic.clone(),
        locale: weak_slate.locale.clone(),
        positives,
        negatives,
        seed,
        shortfall,
    })
}

/// `agree` of `total` annotators must select a provider.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quorum {
    pub agree: u32,
    pub total: u32,
}

impl Default for Quorum {
    fn default() -> Self {
        Quorum { agree: 2, total: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusDecision {
    pub topic: TopicId,
    pub locale: Locale,
    pub provider: ProviderId,
    pub votes: u32,
    pub annotators: u32,
    pub accepted: bool,
    /// Set when the annotator count differs from the quorum size.
    pub deviation: bool,
}

impl Record for ConsensusDecision {}

/// Accepts a provider when at least `agree/total` of its annotators selected it.
///
/// With exactly `total` annotators this is the plain quorum (2 of 3). Fewer
/// annotators reduce to a strict majority of those present; either way the
/// decision is flagged as a deviation.
pub fn consensus_vote(judgments: &[Judgment], quorum: Quorum) -> Result<Vec<ConsensusDecision>> {
    if quorum.agree == 0 || quorum.agree > quorum.total {
        return Err(Error::Parameter(format!(
            "invalid quorum {}/{}",
            quorum.agree, quorum.total
        )));
    }
    type Key = (TopicId, Locale, ProviderId);
    let mut groups: BTreeMap<Key, BTreeMap<&str, bool>> = BTreeMap::new();
    for j in judgments {
        if j.annotator.trim().is_empty() {
            return Err(Error::Data(format!(
                "judgment for ({}, {}, {}) has an empty annotator",
                j.topic, j.locale, j.provider
            )));
        }
        let votes = groups
            .entry((j.topic.clone(), j.locale.clone(), j.provider.clone()))
            .or_default();
        match votes.insert(&j.annotator, j.selected) {
            Some(prev) if prev != j.selected => {
                return Err(Error::Data(format!(
                    "annotator `{}` gave conflicting judgments for ({}, {}, {})",
                    j.annotator, j.topic, j.locale, j.provider
                )))
            }
            _ => {}
        }
    }
    Ok(groups
        .into_iter()
        .map(|((topic, locale, provider), votes)| {
            let annotators = votes.len() as u32;
            let selected = votes.values().filter(|&&s| s).count() as u32;
            let accepted = u64::from(selected) * u64::from(quorum.total)
                >= u64::from(quorum.agree) * u64::from(annotators);
            ConsensusDecision {
                topic,
                locale,
                provider,
                votes: selected,
                annotators,
                accepted: accepted && selected > 0,
                deviation: annotators != quorum.total,
            }
        })
        .collect())
}

/// Accepted providers per (topic, locale).
pub fn accepted_sets(
    decisions: &[ConsensusDecision],
) -> BTreeMap<(TopicId, Locale), BTreeSet<ProviderId>> {
    let mut out: BTreeMap<(TopicId, Locale), BTreeSet<ProviderId>> = BTreeMap::new();
    for d in decisions {
        let entry = out.entry((d.topic.clone(), d.locale.clone())).or_default();
        if d.accepted {
            entry.insert(d.provider.clone());
        }
    }
    out
}

/// The curator instruction used to rank publishers, followed by the
/// topic, locale and candidate list placeholders.
pub const DEFAULT_TEMPLATE: &str = "You are a news feed curator who publishes both news and magazine articles, occasionally including timeless pieces that can be enjoyed at leisure. Each article, whether news or magazine style, revolves around a subject or theme. For instance, a news article like '5 Marines aboard helicopter that crashed outside San Diego confirmed dead' discusses an accident. Conversely, a magazine article such as 'See Inside Delta’s Refreshed Cabins — With Revamped Premium Seating, 10-inch Seatback Screens, and More' is timeless and focuses on Air Travel.

News about recent accidents can be covered by multiple publishers in the journalism industry. Your task is to rank these publishers based on their popularity, trustworthiness among readers, article quality, and expertise on a given topic and its broad readership. For each topic I provide, can you rank the top 30 publishers?

Topic: {topic}
Locale: {locale}
Candidate publishers, one per line:
{candidates}

Answer with a JSON array of publisher ids in rank order, best first. You may add publishers that are missing from the list and leave out candidates that do not belong.
";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub text: String,
    pub warnings: Vec<String>,
}

/// Fills `{topic}`, `{locale}` and `{candidates}` in `template`.
///
/// Candidates are listed one per line in ascending id order so the prompt
/// does not reveal which ones were sampled as negatives. `{topic}` and
/// `{candidates}` are required; `{locale}` is optional.
pub fn render_prompt(
    topic: &TopicId,
    locale: &Locale,
    candidates: &CandidateSet,
    template: &str,
) -> Result<Prompt> {
    for required in ["{topic}", "{candidates}"] {
        if !template.contains(required) {
            return Err(Error::Template(format!(
                "template lacks the {required} placeholder"
            )));
        }
    }
    let mut warnings = Vec::new();
    let list: Vec<&str> = candidates.all_sorted().into_iter().map(|p| p.as_str()).collect();
    if list.is_empty() {
        let msg = format!("({topic}, {locale}): rendering prompt with no candidates");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let text = template
        .replace("{topic}", topic.as_str())
        .replace("{locale}", &locale.to_string())
        .replace("{candidates}", &list.join("\n"));
    Ok(Prompt { text, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    HumanConsensus,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelResponse {
    pub topic: TopicId,
    pub locale: Locale,
    pub ranked_providers: Vec<ProviderId>,
    pub source: LabelSource,
    /// Returned providers that were not among the candidates.
    #[serde(default)]
    pub additions: Vec<ProviderId>,
}

impl Record for LabelResponse {}

#[derive(Debug, Clone)]
pub struct LabelRequest {
    pub topic: TopicId,
    pub locale: Locale,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClientError {
    /// Worth retrying.
    #[error("transport: {0}")]
    Transport(String),
    #[error("{0}")]
    Fatal(String),
}

/// Anything that turns a prompt into a raw response payload: a JSON array
/// of provider ids in rank order.
pub trait LabelerClient: Send + Sync {
    fn complete(&self, request: &LabelRequest) -> std::result::Result<String, ClientError>;
}

/// Serves canned responses from `<dir>/<topic>.<locale>.json`, falling
/// back to `<dir>/<topic>.json`.
#[derive(Debug, Clone)]
pub struct MockLabeler {
    dir: PathBuf,
}

impl MockLabeler {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        MockLabeler { dir: dir.into() }
    }
}

impl LabelerClient for MockLabeler {
    fn complete(&self, request: &LabelRequest) -> std::result::Result<String, ClientError> {
        let specific = self
            .dir
            .join(format!("{}.{}.json", request.topic, request.locale));
        let generic = self.dir.join(format!("{}.json", request.topic));
        for path in [specific, generic] {
            if path.is_file() {
                return std::fs::read_to_string(&path)
                    .map_err(|e| ClientError::Fatal(format!("{}: {e}", path.display())));
            }
        }
        Err(ClientError::Fatal(format!(
            "no canned response for topic `{}` in {}",
            request.topic,
            self.dir.display()
        )))
    }
}

/// POSTs `{"prompt": ...}` and expects `{"providers": [...]}` back.
pub struct HttpLabeler {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpLabeler {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpLabeler {
            endpoint: endpoint.into(),
            agent,
        }
    }
}

impl LabelerClient for HttpLabeler {
    fn complete(&self, request: &LabelRequest) -> std::result::Result<String, ClientError> {
        let body = serde_json::json!({ "prompt": request.prompt }).to_string();
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        if status >= 500 || status == 429 {
            return Err(ClientError::Transport(format!("HTTP {status}")));
        }
        if status >= 400 {
            return Err(ClientError::Fatal(format!("HTTP {status}: {text}")));
        }
        // Hand back the providers array; anything else goes through as-is so
        // the strict parser reports it with the raw payload.
        match serde_json::from_str::<serde_json::Value>(&text) {
            Ok(serde_json::Value::Object(mut obj)) => match obj.remove("providers") {
                Some(list) => Ok(list.to_string()),
                None => Ok(text),
            },
            _ => Ok(text),
        }
    }
}

/// Parses a labeler payload: a JSON array of distinct, non-empty ids.
pub fn parse_label_payload(raw: &str) -> Result<Vec<ProviderId>> {
    let ids: Vec<String> = serde_json::from_str(raw).map_err(|e| Error::Response {
        message: format!("expected a JSON array of strings: {e}"),
        raw: raw.to_string(),
    })?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let pid = ProviderId::new(id.clone()).map_err(|_| Error::Response {
            message: "empty provider id".to_string(),
            raw: raw.to_string(),
        })?;
        if !seen.insert(id.clone()) {
            return Err(Error::Response {
                message: format!("provider `{id}` listed twice"),
                raw: raw.to_string(),
            });
        }
        out.push(pid);
    }
    Ok(out)
}

/// Sends one prompt, retrying transport failures up to `max_attempts` times.
pub fn request_labels(
    client: &dyn LabelerClient,
    request: &LabelRequest,
    candidates: &CandidateSet,
    max_attempts: u32,
) -> Result<LabelResponse> {
    let max_attempts = max_attempts.max(1);
    let mut attempt = 0;
    let raw = loop {
        attempt += 1;
        match client.complete(request) {
            Ok(raw) => break raw,
            Err(ClientError::Transport(msg)) if attempt < max_attempts => {
                log::warn!(
                    "({}, {}): attempt {attempt} failed: {msg}",
                    request.topic,
                    request.locale
                );
            }
            Err(e) => {
                return Err(Error::Transport {
                    attempts: attempt,
                    message: e.to_string(),
                })
            }
        }
    };
    let ranked = parse_label_payload(&raw)?;
    let known: BTreeSet<&ProviderId> = candidates.positives.iter().chain(&candidates.negatives).collect();
    let additions = ranked.iter().filter(|p| !known.contains(p)).cloned().collect();
    Ok(LabelResponse {
        topic: request.topic.clone(),
        locale: request.locale.clone(),
        ranked_providers: ranked,
        source: LabelSource::Llm,
        additions,
    })
}

/// Labels many topics with at most `in_flight` concurrent requests.
/// Results come back in input order.
pub fn request_all(
    client: &dyn LabelerClient,
    jobs: &[(LabelRequest, CandidateSet)],
    max_attempts: u32,
    in_flight: usize,
) -> Vec<Result<LabelResponse>> {
    let in_flight = in_flight.max(1);
    let mut out = Vec::with_capacity(jobs.len());
    for chunk in jobs.chunks(in_flight) {
        if chunk.len() == 1 {
            let (req, cands) = &chunk[0];
            out.push(request_labels(client, req, cands, max_attempts));
            continue;
        }
        std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|(req, cands)| s.spawn(move || request_labels(client, req, cands, max_attempts)))
                .collect();
            for h in handles {
                out.push(h.join().unwrap_or_else(|_| {
                    Err(Error::Transport {
                        attempts: 0,
                        message: "labeler worker panicked".into(),
                    })
                }));
            }
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub precision: f64,
    pub recall: f64,
    pub passed: bool,
    pub flags: Vec<String>,
}

impl AgreementReport {
    fn from_pr(precision: f64, recall: f64, flags: Vec<String>) -> Self {
        AgreementReport {
            precision,
            recall,
            passed: precision >= AGREEMENT_THRESHOLD && recall >= AGREEMENT_THRESHOLD,
            flags,
        }
    }
}

/// Set precision/recall of the labeler's providers against the human
/// consensus set. Passes when both reach 0.95.
pub fn agreement(llm: &LabelResponse, human: &BTreeSet<ProviderId>) -> Result<AgreementReport> {
    if human.is_empty() {
        return Err(Error::Input(format!(
            "no accepted human providers for ({}, {})",
            llm.topic, llm.locale
        )));
    }
    let predicted: BTreeSet<ProviderId> = llm.ranked_providers.iter().cloned().collect();
    let mut flags = Vec::new();
    if predicted.is_empty() {
        flags.push("empty labeler list: precision undefined, reported as 0".to_string());
    }
    let (p, r) = precision_recall(&predicted, human);
    Ok(AgreementReport::from_pr(p, r, flags))
}

/// Pools several topics' overlaps into one micro-averaged report.
pub fn pooled_agreement<'a, I>(pairs: I) -> AgreementReport
where
    I: IntoIterator<Item = (&'a LabelResponse, &'a BTreeSet<ProviderId>)>,
{
    let (mut hits, mut predicted, mut truth) = (0usize, 0usize, 0usize);
    for (llm, human) in pairs {
        let pred: BTreeSet<&ProviderId> = llm.ranked_providers.iter().collect();
        hits += pred.iter().filter(|p| human.contains(**p)).count();
        predicted += pred.len();
        truth += human.len();
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    AgreementReport::from_pr(ratio(hits, predicted), ratio(hits, truth), Vec::new())
}

/// Grades a ranked list: rank `r` of `N` gets `N - r + 1`, negatives get 0.
///
/// The ranked part is cut to `capacity - |negatives|` first, so the last
/// kept provider always has grade 1.
pub fn assign_relevance(
    ranked: &LabelResponse,
    negatives: &[ProviderId],
    capacity: usize,
) -> Result<SlateExample> {
    let neg: BTreeSet<&ProviderId> = negatives.iter().collect();
    if let Some(p) = ranked.ranked_providers.iter().find(|p| neg.contains(p)) {
        return Err(Error::Input(format!(
            "provider `{p}` is both ranked and a negative for ({}, {})",
            ranked.topic, ranked.locale
        )));
    }
    if neg.len() != negatives.len() {
        return Err(Error::Input("negatives repeat a provider".into()));
    }
    if negatives.len() >= capacity {
        return Err(Error::Input(format!(
            "{} negatives leave no room in a slate of capacity {capacity}",
            negatives.len()
        )));
    }
    let keep = ranked.ranked_providers.len().min(capacity - negatives.len());
    let n = keep as u32;
    let mut items: Vec<SlateItem> = ranked.ranked_providers[..keep]
        .iter()
        .enumerate()
        .map(|(i, p)| SlateItem {
            provider: p.clone(),
            relevance: n - i as u32,
        })
        .collect();
    items.extend(negatives.iter().map(|p| SlateItem {
        provider: p.clone(),
        relevance: 0,
    }));
    Ok(SlateExample {
        topic: ranked.topic.clone(),
        locale: ranked.locale.clone(),
        items,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pid(s: &str) -> ProviderId {
        ProviderId::new(s).unwrap()
    }

    fn topic() -> TopicId {
        TopicId::new("sports").unwrap()
    }

    fn locale() -> Locale {
        "en-US".parse().unwrap()
    }

    fn slate(n: usize) -> RankedSlate {
        RankedSlate::from_scores(
            topic(),
            locale(),
            (0..n).map(|i| (pid(&format!("p{i:03}")), 1.0 - i as f64 / 100.0)).collect(),
        )
        .unwrap()
    }

    fn pool(n: usize) -> Vec<ProviderId> {
        (0..n).map(|i| pid(&format!("p{i:03}"))).collect()
    }

    fn judgment(p: &str, who: &str, selected: bool) -> Judgment {
        Judgment {
            topic: topic(),
            locale: locale(),
            provider: pid(p),
            annotator: who.into(),
            selected,
        }
    }

    fn response(ids: &[&str]) -> LabelResponse {
        LabelResponse {
            topic: topic(),
            locale: locale(),
            ranked_providers: ids.iter().map(|s| pid(s)).collect(),
            source: LabelSource::Llm,
            additions: vec![],
        }
    }

    #[test]
    fn sampling_rules() {
        let c = sample_candidates(&slate(40), &pool(100), 10, 7).unwrap();
        assert_eq!(c.positives.len(), 30);
        assert_eq!(c.negatives.len(), 10);
        assert_eq!(c.shortfall, 0);
        let pos: BTreeSet<_> = c.positives.iter().collect();
        assert!(c.negatives.iter().all(|n| !pos.contains(n)));
        assert_eq!(c.positives, slate(40).providers().take(30).cloned().collect::<Vec<_>>());
        let again = sample_candidates(&slate(40), &pool(100), 10, 7).unwrap();
        assert_eq!(c, again);
        let other = sample_candidates(&slate(40), &pool(100), 10, 8).unwrap();
        assert_ne!(c.negatives, other.negatives);
    }

    #[test]
    fn sampling_shortfall_and_params() {
        let c = sample_candidates(&slate(30), &pool(34), 10, 1).unwrap();
        assert_eq!(c.negatives.len(), 4);
        assert_eq!(c.shortfall, 6);
        assert!(sample_candidates(&slate(30), &pool(100), 9, 1).is_err());
        assert!(sample_candidates(&slate(30), &pool(100), 16, 1).is_err());
        assert!(sample_candidates(&slate(30), &pool(10), 10, 1).is_err());
    }

    #[test]
    fn negative_frequencies_are_uniform() {
        // 20 eligible negatives, 10 drawn: each should appear about half the time.
        let s = slate(30);
        let p = pool(50);
        let trials = 4000;
        let mut counts: BTreeMap<ProviderId, usize> = BTreeMap::new();
        for seed in 0..trials {
            for n in sample_candidates(&s, &p, 10, seed).unwrap().negatives {
                *counts.entry(n).or_default() += 1;
            }
        }
        assert_eq!(counts.len(), 20);
        for (id, c) in counts {
            let freq = c as f64 / trials as f64;
            // 5 sigma of a binomial(4000, 0.5) proportion is ~0.04
            assert!((freq - 0.5).abs() < 0.04, "{id}: {freq}");
        }
    }

    #[test]
    fn consensus_truth_table() {
        let votes = |v: [bool; 3]| {
            let js: Vec<_> = ["x", "y", "z"]
                .iter()
                .zip(v)
                .map(|(who, s)| judgment("espn", who, s))
                .collect();
            consensus_vote(&js, Quorum::default()).unwrap()[0].clone()
        };
        assert!(votes([true, true, false]).accepted);
        assert!(!votes([true, false, false]).accepted);
        assert!(votes([true, true, true]).accepted);
        assert!(!votes([false, false, false]).accepted);
        assert!(!votes([true, true, false]).deviation);
    }

    #[test]
    fn consensus_with_fewer_annotators_uses_majority() {
        let one = consensus_vote(&[judgment("a", "x", true)], Quorum::default()).unwrap();
        assert!(one[0].accepted && one[0].deviation);
        let split = consensus_vote(
            &[judgment("a", "x", true), judgment("a", "y", false)],
            Quorum::default(),
        )
        .unwrap();
        assert!(!split[0].accepted && split[0].deviation);
        let both = consensus_vote(
            &[judgment("a", "x", true), judgment("a", "y", true)],
            Quorum::default(),
        )
        .unwrap();
        assert!(both[0].accepted);
    }

    #[test]
    fn conflicting_duplicate_is_data_error() {
        let js = [judgment("a", "x", true), judgment("a", "x", false)];
        assert!(matches!(
            consensus_vote(&js, Quorum::default()),
            Err(Error::Data(_))
        ));
        let same = [judgment("a", "x", true), judgment("a", "x", true)];
        assert_eq!(consensus_vote(&same, Quorum::default()).unwrap()[0].annotators, 1);
    }

    #[test]
    fn prompt_substitution() {
        let c = CandidateSet {
            topic: TopicId::new("Sports").unwrap(),
            locale: locale(),
            positives: vec![pid("ESPN")],
            negatives: vec![],
            seed: 0,
            shortfall: 0,
        };
        let p = render_prompt(&c.topic, &c.locale, &c, "Rank for {topic}: {candidates}").unwrap();
        assert_eq!(p.text, "Rank for Sports: ESPN");
        assert!(p.warnings.is_empty());
        assert!(matches!(
            render_prompt(&c.topic, &c.locale, &c, "Rank {topic}"),
            Err(Error::Template(_))
        ));
    }

    #[test]
    fn default_template_carries_instruction() {
        let c = CandidateSet {
            topic: topic(),
            locale: locale(),
            positives: vec![pid("b"), pid("a")],
            negatives: vec![pid("c")],
            seed: 0,
            shortfall: 0,
        };
        let p = render_prompt(&c.topic, &c.locale, &c, DEFAULT_TEMPLATE).unwrap();
        assert!(p.text.starts_with("You are a news feed curator who publishes both news and magazine articles"));
        assert!(p.text.contains("For each topic I provide, can you rank the top 30 publishers?"));
        assert!(p.text.contains("Delta’s Refreshed Cabins — With Revamped Premium Seating"));
        assert!(p.text.contains("Topic: sports\nLocale: en-US\n"));
        assert!(p.text.contains("\na\nb\nc\n"));
    }

    #[test]
    fn empty_candidates_warn() {
        let c = CandidateSet {
            topic: topic(),
            locale: locale(),
            positives: vec![],
            negatives: vec![],
            seed: 0,
            shortfall: 0,
        };
        let p = render_prompt(&c.topic, &c.locale, &c, "{topic}:[{candidates}]").unwrap();
        assert_eq!(p.text, "sports:[]");
        assert_eq!(p.warnings.len(), 1);
    }

    struct Canned(&'static str);
    impl LabelerClient for Canned {
        fn complete(&self, _: &LabelRequest) -> std::result::Result<String, ClientError> {
            Ok(self.0.to_string())
        }
    }

    struct Flaky {
        failures: std::sync::atomic::AtomicU32,
    }
    impl LabelerClient for Flaky {
        fn complete(&self, _: &LabelRequest) -> std::result::Result<String, ClientError> {
            use std::sync::atomic::Ordering;
            if self.failures.fetch_sub(1, Ordering::SeqCst) > 0 {
                Err(ClientError::Transport("connection reset".into()))
            } else {
                Ok(r#"["A"]"#.into())
            }
        }
    }

    fn request() -> LabelRequest {
        LabelRequest {
            topic: topic(),
            locale: locale(),
            prompt: "p".into(),
        }
    }

    fn cands(ids: &[&str]) -> CandidateSet {
        CandidateSet {
            topic: topic(),
            locale: locale(),
            positives: ids.iter().map(|s| pid(s)).collect(),
            negatives: vec![],
            seed: 0,
            shortfall: 0,
        }
    }

    #[test]
    fn labels_pass_through() {
        let r = request_labels(&Canned(r#"["A","B"]"#), &request(), &cands(&["A", "B"]), 1).unwrap();
        assert_eq!(r.ranked_providers, vec![pid("A"), pid("B")]);
        assert_eq!(r.source, LabelSource::Llm);
        assert!(r.additions.is_empty());
    }

    #[test]
    fn labels_reject_duplicates_and_garbage() {
        let dup = request_labels(&Canned(r#"["A","A"]"#), &request(), &cands(&["A"]), 1);
        match dup {
            Err(Error::Response { raw, .. }) => assert_eq!(raw, r#"["A","A"]"#),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            request_labels(&Canned("A, B"), &request(), &cands(&["A"]), 1),
            Err(Error::Response { .. })
        ));
        assert!(matches!(
            request_labels(&Canned(r#"{"providers":["A"]}"#), &request(), &cands(&["A"]), 1),
            Err(Error::Response { .. })
        ));
    }

    #[test]
    fn labels_flag_additions() {
        let r = request_labels(&Canned(r#"["A","Z"]"#), &request(), &cands(&["A", "B"]), 1).unwrap();
        assert_eq!(r.ranked_providers, vec![pid("A"), pid("Z")]);
        assert_eq!(r.additions, vec![pid("Z")]);
    }

    #[test]
    fn transport_retries() {
        let flaky = Flaky {
            failures: 2.into(),
        };
        assert!(request_labels(&flaky, &request(), &cands(&["A"]), 3).is_ok());
        let flaky = Flaky {
            failures: 3.into(),
        };
        match request_labels(&flaky, &request(), &cands(&["A"]), 3) {
            Err(Error::Transport { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mock_reads_by_topic() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("sports.json"), r#"["espn"]"#).unwrap();
        let mock = MockLabeler::new(dir.path());
        assert_eq!(mock.complete(&request()).unwrap(), r#"["espn"]"#);
        std::fs::write(dir.path().join("sports.en-US.json"), r#"["bbc"]"#).unwrap();
        assert_eq!(mock.complete(&request()).unwrap(), r#"["bbc"]"#);
        let other = LabelRequest {
            topic: TopicId::new("golf").unwrap(),
            ..request()
        };
        assert!(matches!(mock.complete(&other), Err(ClientError::Fatal(_))));
    }

    #[test]
    fn agreement_examples() {
        let human: BTreeSet<ProviderId> = ["A", "B", "D"].iter().map(|s| pid(s)).collect();
        let r = agreement(&response(&["A", "B", "C"]), &human).unwrap();
        assert!((r.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!(!r.passed);

        let twenty: Vec<String> = (b'A'..=b'T').map(|c| (c as char).to_string()).collect();
        let refs: Vec<&str> = twenty.iter().map(|s| s.as_str()).collect();
        let all: BTreeSet<ProviderId> = refs.iter().map(|s| pid(s)).collect();
        let r = agreement(&response(&refs), &all).unwrap();
        assert_eq!((r.precision, r.recall, r.passed), (1.0, 1.0, true));
        let r = agreement(&response(&["A"]), &all).unwrap();
        assert_eq!(r.precision, 1.0);
        assert!((r.recall - 0.05).abs() < 1e-15);
        assert!(!r.passed);

        let r = agreement(&response(&[]), &all).unwrap();
        assert_eq!(r.precision, 0.0);
        assert_eq!(r.flags.len(), 1);
        assert!(agreement(&response(&["A"]), &BTreeSet::new()).is_err());
    }

    #[test]
    fn gate_is_inclusive_at_threshold() {
        // 19 of 20 on both sides: exactly 0.95.
        let llm: Vec<String> = (0..20).map(|i| format!("p{i}")).collect();
        let mut human: BTreeSet<ProviderId> = (0..19).map(|i| pid(&format!("p{i}"))).collect();
        human.insert(pid("q"));
        let refs: Vec<&str> = llm.iter().map(|s| s.as_str()).collect();
        let r = agreement(&response(&refs), &human).unwrap();
        assert_eq!(r.precision, 0.95);
        assert_eq!(r.recall, 0.95);
        assert!(r.passed);
    }

    #[test]
    fn relevance_grades() {
        let names: Vec<String> = (0..25).map(|i| format!("p{i:02}")).collect();
        let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        let negs = vec![pid("n1"), pid("n2"), pid("n3")];
        let s = assign_relevance(&response(&refs), &negs, 30).unwrap();
        assert_eq!(s.items.len(), 28);
        assert_eq!(s.items[0].relevance, 25);
        assert_eq!(s.items[24].relevance, 1);
        assert!(s.items[25..].iter().all(|i| i.relevance == 0));

        let s = assign_relevance(&response(&["A", "B"]), &[], 30).unwrap();
        assert_eq!(
            s.items.iter().map(|i| i.relevance).collect::<Vec<_>>(),
            vec![2, 1]
        );
        assert!(assign_relevance(&response(&["A"]), &[pid("A")], 30).is_err());
    }

    #[test]
    fn relevance_truncates_to_capacity() {
        let names: Vec<String> = (0..30).map(|i| format!("p{i:02}")).collect();
        let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        let negs: Vec<ProviderId> = (0..10).map(|i| pid(&format!("n{i}"))).collect();
        let s = assign_relevance(&response(&refs), &negs, 30).unwrap();
        assert_eq!(s.items.len(), 30);
        assert_eq!(s.items[0].relevance, 20);
        assert_eq!(s.items[19].relevance, 1);
    }

    proptest! {
        #[test]
        fn consensus_ignores_order(
            votes in proptest::collection::vec((0usize..5, 0usize..4, any::<bool>()), 1..30),
            shuffle_seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let mut js: Vec<Judgment> = Vec::new();
            let mut seen = BTreeSet::new();
            for (p, a, s) in votes {
                if seen.insert((p, a)) {
                    js.push(judgment(&format!("p{p}"), &format!("a{a}"), s));
                }
            }
            let base = consensus_vote(&js, Quorum::default()).unwrap();
            js.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
            prop_assert_eq!(base, consensus_vote(&js, Quorum::default()).unwrap());
        }

        #[test]
        fn agreement_depends_only_on_overlap(
            llm in proptest::collection::btree_set(0u32..30, 1..20),
            human in proptest::collection::btree_set(0u32..30, 1..20),
            offset in 100u32..1000,
        ) {
            let to_resp = |s: &BTreeSet<u32>, off: u32| {
                let ids: Vec<String> = s.iter().map(|i| format!("x{}", i + off)).collect();
                let refs: Vec<&str> = ids.iter().map(|s| s.as_str()).collect();
                response(&refs)
            };
            let to_set = |s: &BTreeSet<u32>, off: u32| -> BTreeSet<ProviderId> {
                s.iter().map(|i| pid(&format!("x{}", i + off))).collect()
            };
            let a = agreement(&to_resp(&llm, 0), &to_set(&human, 0)).unwrap();
            let b = agreement(&to_resp(&llm, offset), &to_set(&human, offset)).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn relevance_strictly_decreasing(n in 1usize..40, negs in 0usize..10) {
            let names: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
            let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
            let neg: Vec<ProviderId> = (0..negs).map(|i| pid(&format!("n{i}"))).collect();
            let s = assign_relevance(&response(&refs), &neg, 30).unwrap();
            let ranked = &s.items[..s.items.len() - negs];
            prop_assert!(ranked.windows(2).all(|w| w[0].relevance > w[1].relevance));
            prop_assert_eq!(ranked.last().unwrap().relevance, 1);
            prop_assert!(s.items[s.items.len() - negs..].iter().all(|i| i.relevance == 0));
            prop_assert!(s.items.len() <= 30);
        }
    }
}
