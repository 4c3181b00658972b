//! Forum-thread dumps to conversation chains.

use std::collections::HashMap;
use std::io::BufRead;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{self, Token};

/// One post and its replies in original posting order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPost {
    #[serde(default)]
    pub author: String,
    #[serde(default)]
    pub body: String,
    #[serde(default)]
    pub children: Vec<RawPost>,
}

impl RawPost {
    pub fn new(body: impl Into<String>) -> Self {
        Self { author: String::new(), body: body.into(), children: Vec::new() }
    }

    pub fn with_children(mut self, children: Vec<RawPost>) -> Self {
        self.children = children;
        self
    }

    /// Number of posts in this subtree, including this one.
    pub fn size(&self) -> usize {
        1 + self.children.iter().map(RawPost::size).sum::<usize>()
    }

    /// Length of the longest root-to-leaf path, counted in edges.
    pub fn depth(&self) -> usize {
        self.children.iter().map(|c| 1 + c.depth()).max().unwrap_or(0)
    }

    pub fn leaf_count(&self) -> usize {
        if self.children.is_empty() {
            1
        } else {
            self.children.iter().map(RawPost::leaf_count).sum()
        }
    }
}

/// A thread: the topic post is the root of the reply tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreadTree {
    pub thread_id: String,
    pub topic: RawPost,
}

impl ThreadTree {
    pub fn replies(&self) -> &[RawPost] {
        &self.topic.children
    }
}

/// A cleaned utterance and its surface tokens. Empty text marks an
/// utterance that cleaning filtered out.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub struct Utterance {
    pub text: String,
    pub tokens: Vec<Token>,
}

impl Utterance {
    /// Wraps already-cleaned text.
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = text::tokenize(&text);
        Self { text, tokens }
    }

    pub fn from_raw(raw: &str) -> Self {
        Self::new(text::clean_text(raw))
    }

    pub fn from_tokens(tokens: Vec<Token>) -> Self {
        Self { text: text::detokenize(&tokens), tokens }
    }

    pub fn is_filtered(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn surface(&self) -> Vec<String> {
        text::surface(&self.tokens)
    }
}

impl From<String> for Utterance {
    fn from(text: String) -> Self {
        Self::new(text)
    }
}

impl From<Utterance> for String {
    fn from(u: Utterance) -> Self {
        u.text
    }
}

/// An ordered exchange. `origin` names the thread and the reply path
/// (`thread/child/child...`), plus `@offset` once windowed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Conversation {
    pub origin: String,
    pub utterances: Vec<Utterance>,
}

impl Conversation {
    pub fn new(origin: impl Into<String>, utterances: Vec<Utterance>) -> Self {
        Self { origin: origin.into(), utterances }
    }

    pub fn from_texts<S: AsRef<str>>(origin: impl Into<String>, texts: &[S]) -> Self {
        Self::new(origin, texts.iter().map(|t| Utterance::new(t.as_ref())).collect())
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// True when no utterance was filtered out by cleaning.
    pub fn is_complete(&self) -> bool {
        self.utterances.iter().all(|u| !u.is_filtered())
    }
}

/// Result of reading a dump: parsed threads plus per-record failures.
#[derive(Debug, Default)]
pub struct ThreadDump {
    pub threads: Vec<ThreadTree>,
    pub errors: Vec<Error>,
}

#[derive(Deserialize)]
struct FlatPost {
    id: String,
    #[serde(default)]
    parent: Option<String>,
    #[serde(default)]
    author: String,
    #[serde(default)]
    body: String,
}

#[derive(Deserialize)]
struct ThreadRecord {
    thread_id: String,
    #[serde(default)]
    topic: Option<RawPost>,
    #[serde(default)]
    posts: Option<Vec<FlatPost>>,
}

/// Reads a JSONL thread dump.
///
/// Records are either nested (`{"thread_id", "topic": {author, body, children}}`)
/// or flat (`{"thread_id", "posts": [{id, parent, author, body}]}`). A malformed
/// record is reported with its 1-based line number and skipped; a cyclic
/// parent chain in a flat record aborts the whole parse.
pub fn parse_thread_dump<R: BufRead>(input: R) -> Result<ThreadDump> {
    let lines: Vec<(usize, String)> = input
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)))
        .collect::<std::io::Result<_>>()?;

    let parsed: Vec<Result<ThreadTree>> = lines
        .par_iter()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(line, l)| parse_record(*line, l))
        .collect();

    let mut dump = ThreadDump::default();
    for r in parsed {
        match r {
            Ok(t) => dump.threads.push(t),
            Err(e @ Error::CyclicThread { .. }) => return Err(e),
            Err(e) => dump.errors.push(e),
        }
    }
    Ok(dump)
}

fn parse_record(line: usize, raw: &str) -> Result<ThreadTree> {
    let record: ThreadRecord =
        serde_json::from_str(raw).map_err(|e| Error::Record { line, message: e.to_string() })?;
    let topic = match (record.topic, record.posts) {
        (Some(topic), None) => topic,
        (None, Some(posts)) => build_from_flat(line, &record.thread_id, posts)?,
        (Some(_), Some(_)) => {
            return Err(Error::Record { line, message: "both `topic` and `posts` present".into() })
        }
        (None, None) => {
            return Err(Error::Record { line, message: "missing `topic` or `posts`".into() })
        }
    };
    Ok(ThreadTree { thread_id: record.thread_id, topic })
}

fn build_from_flat(line: usize, thread_id: &str, posts: Vec<FlatPost>) -> Result<RawPost> {
    let mut index: HashMap<&str, usize> = HashMap::with_capacity(posts.len());
    for (i, p) in posts.iter().enumerate() {
        if index.insert(p.id.as_str(), i).is_some() {
            return Err(Error::Record { line, message: format!("duplicate post id {}", p.id) });
        }
    }

    let mut parent_of: Vec<Option<usize>> = Vec::with_capacity(posts.len());
    for p in &posts {
        let parent = match &p.parent {
            None => None,
            Some(pid) => Some(*index.get(pid.as_str()).ok_or_else(|| Error::Record {
                line,
                message: format!("post {} references unknown parent {pid}", p.id),
            })?),
        };
        parent_of.push(parent);
    }

    // Every parent chain must end at a root; revisiting a node means a cycle.
    // 0 = unvisited, 1 = on the current walk, 2 = known to reach a root
    let mut state = vec![0u8; posts.len()];
    for start in 0..posts.len() {
        let mut walk = Vec::new();
        let mut cur = Some(start);
        while let Some(i) = cur {
            match state[i] {
                2 => break,
                1 => {
                    return Err(Error::CyclicThread {
                        thread_id: thread_id.to_string(),
                        post_id: posts[i].id.clone(),
                    })
                }
                _ => {
                    state[i] = 1;
                    walk.push(i);
                    cur = parent_of[i];
                }
            }
        }
        for i in walk {
            state[i] = 2;
        }
    }

    let roots: Vec<usize> = (0..posts.len()).filter(|&i| parent_of[i].is_none()).collect();
    if roots.len() != 1 {
        return Err(Error::Record { line, message: format!("expected one topic post, found {}", roots.len()) });
    }

    let mut children: Vec<Vec<usize>> = vec![Vec::new(); posts.len()];
    for (i, parent) in parent_of.iter().enumerate() {
        if let Some(p) = parent {
            children[*p].push(i);
        }
    }

    fn build(i: usize, posts: &[FlatPost], children: &[Vec<usize>]) -> RawPost {
        RawPost {
            author: posts[i].author.clone(),
            body: posts[i].body.clone(),
            children: children[i].iter().map(|&c| build(c, posts, children)).collect(),
        }
    }
    Ok(build(roots[0], &posts, &children))
}

/// One conversation per root-to-leaf path, in depth-first leaf order.
/// Post bodies are cleaned; a post that cleans to nothing stays in the chain
/// as a filtered utterance so windowing can drop the gap.
pub fn extract_chains(tree: &ThreadTree) -> Vec<Conversation> {
    let mut out = Vec::new();
    let mut chain: Vec<Utterance> = Vec::new();
    let mut path: Vec<usize> = Vec::new();
    walk(&tree.topic, &tree.thread_id, &mut chain, &mut path, &mut out);
    out
}

fn walk(
    post: &RawPost,
    thread_id: &str,
    chain: &mut Vec<Utterance>,
    path: &mut Vec<usize>,
    out: &mut Vec<Conversation>,
) {
    chain.push(Utterance::from_raw(&post.body));
    if post.children.is_empty() {
        out.push(Conversation::new(origin(thread_id, path), chain.clone()));
    } else {
        for (i, child) in post.children.iter().enumerate() {
            path.push(i);
            walk(child, thread_id, chain, path, out);
            path.pop();
        }
    }
    chain.pop();
}

fn origin(thread_id: &str, path: &[usize]) -> String {
    let mut s = thread_id.to_string();
    for i in path {
        s.push('/');
        s.push_str(&i.to_string());
    }
    s
}

/// Chains for a batch of threads, in input order.
pub fn extract_all_chains(threads: &[ThreadTree]) -> Vec<Conversation> {
    threads.par_iter().map(extract_chains).collect::<Vec<_>>().into_iter().flatten().collect()
}
