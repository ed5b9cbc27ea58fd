use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::messages::MessageKind;
use crate::log::DEFAULT_FRESHNESS_WINDOW;
use crate::time::{Timestamp, DAY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Signed manifests, a transparency log and stapled proofs.
    #[default]
    AccountableJs,
    /// Hash publication through a trusted broker, no signatures on delivery.
    CodeVerify,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteSpec {
    pub url: String,
    pub common_name: String,
    pub developer: String,
    pub server: String,
    /// The page the developer means to ship.
    pub benign: String,
    /// The page the adversary would like clients to run.
    pub malicious: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corruption {
    pub principal: String,
    #[serde(default)]
    pub at_step: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum Step {
    /// The site's developer publishes its benign page as a new version.
    Publish { url: String },
    /// The adversary publishes the malicious page with the developer's key.
    AdversaryPublish { url: String },
    /// A client requests the page.
    Deliver { client: String, url: String },
    Corrupt { principal: String },
    AdvanceClock { secs: u64 },
    /// The log sends the site's server a fresh staple.
    RefreshStaple { url: String },
    /// Deliver every pending message in order.
    Flush,
    DeliverNext,
    DropNext,
    /// Resend the most recent public message of this kind.
    Replay { kind: MessageKind },
    /// A corrupted server answers pending requests with the malicious page.
    ServeMalicious { url: String },
    /// The network swaps the page in pending responses, keeping signatures.
    TamperResponses { url: String },
    /// A corrupted client submits a claim without a valid server signature.
    ForgeClaim { client: String, url: String },
    /// Clients hand their stored claims to the public.
    SubmitClaims {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        client: Option<String>,
    },
    /// A corrupted broker records the malicious page's hash.
    BrokerPublishMalicious { url: String },
}

fn default_window() -> u64 {
    DEFAULT_FRESHNESS_WINDOW
}
fn default_true() -> bool {
    true
}
fn default_start() -> Timestamp {
    Timestamp(1_000_000)
}
fn default_ttl() -> u64 {
    30 * DAY
}
fn default_log() -> String {
    "L".into()
}
fn default_broker() -> String {
    "B".into()
}
fn default_public() -> String {
    "P".into()
}
fn default_steps() -> usize {
    200
}
fn default_depth() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub variant: Variant,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_window")]
    pub freshness_window: u64,
    /// Clients that skip the freshness check model a misconfiguration.
    #[serde(default = "default_true")]
    pub client_checks_freshness: bool,
    #[serde(default = "default_start")]
    pub start_time: Timestamp,
    #[serde(default = "default_ttl")]
    pub envelope_ttl: u64,
    pub sites: Vec<SiteSpec>,
    pub clients: Vec<String>,
    #[serde(default = "default_log")]
    pub log: String,
    #[serde(default = "default_broker")]
    pub broker: String,
    #[serde(default = "default_public")]
    pub public: String,
    #[serde(default)]
    pub corruptions: Vec<Corruption>,
    /// Scripted run. Without it the scheduler picks actions at random.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<Vec<Step>>,
    #[serde(default = "default_steps")]
    pub max_steps: usize,
    #[serde(default = "default_depth")]
    pub max_derivation_depth: usize,
}

impl Scenario {
    /// One site, one client, default principal names `D`, `W`, `C`.
    pub fn single_site(url: &str, common_name: &str, benign: &str, malicious: &str) -> Self {
        Scenario {
            name: String::new(),
            variant: Variant::AccountableJs,
            seed: 0,
            freshness_window: default_window(),
            client_checks_freshness: true,
            start_time: default_start(),
            envelope_ttl: default_ttl(),
            sites: vec![SiteSpec {
                url: url.into(),
                common_name: common_name.into(),
                developer: "D".into(),
                server: "W".into(),
                benign: benign.into(),
                malicious: malicious.into(),
            }],
            clients: vec!["C".into()],
            log: default_log(),
            broker: default_broker(),
            public: default_public(),
            corruptions: Vec::new(),
            steps: None,
            max_steps: default_steps(),
            max_derivation_depth: default_depth(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| e.to_string())?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.sites.is_empty() {
            return Err("scenario has no sites".into());
        }
        let mut ids = BTreeSet::new();
        let mut urls = BTreeSet::new();
        let fixed = [&self.log, &self.broker, &self.public];
        for id in self.sites.iter().flat_map(|s| [&s.developer, &s.server]).chain(&self.clients).chain(fixed) {
            if !ids.insert(id.as_str()) {
                return Err(format!("principal `{id}` is declared twice"));
            }
        }
        for s in &self.sites {
            if !urls.insert(s.url.as_str()) {
                return Err(format!("site `{}` is declared twice", s.url));
            }
        }
        for c in &self.corruptions {
            if !ids.contains(c.principal.as_str()) {
                return Err(format!("cannot corrupt unknown principal `{}`", c.principal));
            }
            if c.principal == self.log || c.principal == self.public {
                return Err(format!("`{}` is trusted and cannot be corrupted", c.principal));
            }
        }
        Ok(())
    }

    pub fn site(&self, url: &str) -> Option<&SiteSpec> {
        self.sites.iter().find(|s| s.url == url)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_defaults_and_steps() {
        let s = Scenario::from_json(
            r#"{
              "sites": [{"url": "http://a.com/", "common_name": "a.com", "developer": "D", "server": "W",
                         "benign": "b", "malicious": "m"}],
              "clients": ["C"],
              "corruptions": [{"principal": "D"}],
              "steps": [{"action": "adversary-publish", "url": "http://a.com/"}, {"action": "flush"},
                        {"action": "replay", "kind": "server-response"}, {"action": "submit-claims"}]
            }"#,
        )
        .unwrap();
        assert_eq!(s.variant, Variant::AccountableJs);
        assert_eq!(s.freshness_window, DEFAULT_FRESHNESS_WINDOW);
        assert_eq!(s.steps.as_ref().unwrap()[2], Step::Replay { kind: MessageKind::ServerResponse });
        assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn rejects_bad_declarations() {
        let mut s = Scenario::single_site("http://a.com/", "a.com", "b", "m");
        s.clients.push("D".into());
        assert!(s.validate().unwrap_err().contains("declared twice"));
        let mut s = Scenario::single_site("http://a.com/", "a.com", "b", "m");
        s.corruptions.push(Corruption { principal: "L".into(), at_step: 0 });
        assert!(s.validate().unwrap_err().contains("trusted"));
    }
}
