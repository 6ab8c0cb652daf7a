//! Detector rules: one declarative rule per feature code, loaded from a
//! line-oriented rule file with a built-in default set.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::corpus::ContractSource;
use crate::error::{Error, Result};
use crate::family::Family;
use crate::scan::{FunctionSpan, Pattern, PatternKind, Scope};

const DEFAULT_RULES: &str = include_str!("../rules/default.rules");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    /// Fires when the pattern condition holds.
    Presence,
    /// Fires when an anchor is present but the condition does not hold
    /// ("lacks X" detectors).
    Absence,
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Presence => "presence",
            Polarity::Absence => "absence",
        })
    }
}

impl FromStr for Polarity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "presence" => Ok(Polarity::Presence),
            "absence" => Ok(Polarity::Absence),
            other => Err(format!("unknown polarity `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionRule {
    pub code: String,
    pub family: Family,
    pub name: String,
    pub polarity: Polarity,
    /// Applicability condition for absence rules (any one suffices).
    pub anchor: Vec<Pattern>,
    pub all_of: Vec<Pattern>,
    pub any_of: Vec<Pattern>,
    pub none_of: Vec<Pattern>,
}

impl DetectionRule {
    fn patterns(&self) -> impl Iterator<Item = &Pattern> {
        self.anchor
            .iter()
            .chain(&self.all_of)
            .chain(&self.any_of)
            .chain(&self.none_of)
    }

    /// Whether the rule is evaluated function by function.
    pub fn is_function_level(&self) -> bool {
        self.patterns().any(|p| p.scope() != Scope::File)
    }

    fn condition(&self, text: &str, span: Option<&FunctionSpan>) -> bool {
        let m = |p: &Pattern| p.matches_in(text, span);
        self.all_of.iter().all(m)
            && (self.any_of.is_empty() || self.any_of.iter().any(m))
            && !self.none_of.iter().any(m)
    }

    fn evaluate_unit(&self, text: &str, span: Option<&FunctionSpan>) -> bool {
        let raw = self.condition(text, span);
        match self.polarity {
            Polarity::Presence => raw,
            Polarity::Absence => !raw && self.anchor.iter().any(|p| p.matches_in(text, span)),
        }
    }

    fn index(&self) -> usize {
        Family::parse_code(&self.code).map(|(_, i)| i).unwrap_or(usize::MAX)
    }
}

/// Evaluates one rule against a source. Function-level rules fire when any
/// function with a body fires; file-level rules are evaluated once.
pub fn evaluate_rule(rule: &DetectionRule, source: &ContractSource, spans: &[FunctionSpan]) -> bool {
    let text = source.normalized_text.as_str();
    if rule.is_function_level() {
        spans
            .iter()
            .filter(|s| s.has_body())
            .any(|s| rule.evaluate_unit(text, Some(s)))
    } else {
        rule.evaluate_unit(text, None)
    }
}

/// A complete, validated set of 36 rules in code order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    version: String,
    rules: Vec<DetectionRule>,
}

impl RuleSet {
    pub fn new(version: impl Into<String>, mut rules: Vec<DetectionRule>) -> Result<Self> {
        let err = |rule: &DetectionRule, message: String| Error::Rules {
            line: 0,
            rule: Some(rule.code.clone()),
            message,
        };
        for rule in &rules {
            let Some((family, _)) = Family::parse_code(&rule.code) else {
                return Err(err(rule, format!("unknown code `{}`", rule.code)));
            };
            if family != rule.family {
                return Err(err(
                    rule,
                    format!("code {} does not belong to family {}", rule.code, rule.family),
                ));
            }
            check_rule_shape(rule).map_err(|m| err(rule, m))?;
        }
        rules.sort_by_key(|r| (r.family, r.index()));
        for pair in rules.windows(2) {
            if pair[0].code == pair[1].code {
                return Err(err(&pair[1], format!("duplicate code `{}`", pair[1].code)));
            }
        }
        for family in Family::ALL {
            for code in family.codes() {
                if !rules.iter().any(|r| r.code == code) {
                    return Err(Error::Rules {
                        line: 0,
                        rule: Some(code.clone()),
                        message: format!("missing rule {code}"),
                    });
                }
            }
        }
        Ok(RuleSet {
            version: version.into(),
            rules,
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn rules(&self) -> &[DetectionRule] {
        &self.rules
    }

    /// Rules of one family in code order.
    pub fn family_rules(&self, family: Family) -> &[DetectionRule] {
        let start = self.rules.iter().position(|r| r.family == family).unwrap_or(0);
        &self.rules[start..start + family.arity()]
    }

    pub fn rule(&self, code: &str) -> Option<&DetectionRule> {
        self.rules.iter().find(|r| r.code == code)
    }

    /// Serializes to the rule-file format.
    pub fn to_rule_file(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "version = {}", self.version);
        for rule in &self.rules {
            let _ = writeln!(out, "\n[rule {}]", rule.code);
            let _ = writeln!(out, "name = {}", rule.name);
            let _ = writeln!(out, "family = {}", rule.family);
            let _ = writeln!(out, "polarity = {}", rule.polarity);
            for (key, list) in [
                ("anchor", &rule.anchor),
                ("all_of", &rule.all_of),
                ("any_of", &rule.any_of),
                ("none_of", &rule.none_of),
            ] {
                for p in list {
                    let _ = writeln!(out, "{key} = {p}");
                }
            }
        }
        out
    }

    /// Parses the rule-file format and validates completeness.
    pub fn parse(text: &str) -> Result<Self> {
        let mut version: Option<String> = None;
        let mut rules: Vec<(usize, DetectionRule)> = Vec::new();
        let mut current: Option<(usize, PartialRule)> = None;

        for (n, raw_line) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(header) = line.strip_prefix('[') {
                let code = header
                    .strip_suffix(']')
                    .and_then(|h| h.trim().strip_prefix("rule "))
                    .map(str::trim)
                    .ok_or_else(|| Error::Rules {
                        line: line_no,
                        rule: None,
                        message: format!("malformed section header `{line}`"),
                    })?;
                if let Some((start, partial)) = current.take() {
                    rules.push((start, partial.finish(start)?));
                }
                if Family::parse_code(code).is_none() {
                    return Err(Error::Rules {
                        line: line_no,
                        rule: Some(code.to_string()),
                        message: format!("unknown code `{code}`"),
                    });
                }
                current = Some((line_no, PartialRule::new(code)));
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Rules {
                line: line_no,
                rule: current.as_ref().map(|(_, p)| p.code.clone()),
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            match current.as_mut() {
                None if key == "version" => version = Some(value.to_string()),
                None => {
                    return Err(Error::Rules {
                        line: line_no,
                        rule: None,
                        message: format!("`{key}` outside a rule section"),
                    })
                }
                Some((_, partial)) => partial.set(key, value).map_err(|message| Error::Rules {
                    line: line_no,
                    rule: Some(partial.code.clone()),
                    message,
                })?,
            }
        }
        if let Some((start, partial)) = current.take() {
            rules.push((start, partial.finish(start)?));
        }
        let version = version.ok_or_else(|| Error::Rules {
            line: 1,
            rule: None,
            message: "missing `version =` line".into(),
        })?;
        // Re-attach section line numbers to validation errors.
        let lines: Vec<(String, usize)> = rules.iter().map(|(l, r)| (r.code.clone(), *l)).collect();
        RuleSet::new(version, rules.into_iter().map(|(_, r)| r).collect()).map_err(|e| match e {
            Error::Rules {
                line: 0,
                rule: Some(code),
                message,
            } => Error::Rules {
                line: lines
                    .iter()
                    .filter(|(c, _)| *c == code)
                    .map(|&(_, l)| l)
                    .next_back()
                    .unwrap_or(0),
                rule: Some(code),
                message,
            },
            other => other,
        })
    }
}

fn check_rule_shape(rule: &DetectionRule) -> Result<(), String> {
    if rule.name.is_empty() {
        return Err("rule has no name".into());
    }
    if rule.all_of.is_empty() && rule.any_of.is_empty() && rule.none_of.is_empty() {
        return Err("all_of, any_of and none_of are all empty".into());
    }
    match rule.polarity {
        Polarity::Absence if rule.anchor.is_empty() => {
            Err("absence rule needs at least one anchor pattern".into())
        }
        Polarity::Presence if !rule.anchor.is_empty() => {
            Err("anchor patterns are only meaningful for absence rules".into())
        }
        _ => Ok(()),
    }
}

struct PartialRule {
    code: String,
    name: Option<String>,
    family: Option<Family>,
    polarity: Option<Polarity>,
    anchor: Vec<Pattern>,
    all_of: Vec<Pattern>,
    any_of: Vec<Pattern>,
    none_of: Vec<Pattern>,
}

impl PartialRule {
    fn new(code: &str) -> Self {
        PartialRule {
            code: code.to_string(),
            name: None,
            family: None,
            polarity: None,
            anchor: Vec::new(),
            all_of: Vec::new(),
            any_of: Vec::new(),
            none_of: Vec::new(),
        }
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "name" => self.name = Some(value.to_string()),
            "family" => self.family = Some(value.parse().map_err(|e: Error| e.to_string())?),
            "polarity" => self.polarity = Some(value.parse()?),
            "anchor" | "all_of" | "any_of" | "none_of" => {
                let pattern = parse_pattern(value)?;
                match key {
                    "anchor" => self.anchor.push(pattern),
                    "all_of" => self.all_of.push(pattern),
                    "any_of" => self.any_of.push(pattern),
                    _ => self.none_of.push(pattern),
                }
            }
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    fn finish(self, line: usize) -> Result<DetectionRule> {
        let missing = |what: &str| Error::Rules {
            line,
            rule: Some(self.code.clone()),
            message: format!("missing `{what}`"),
        };
        let rule = DetectionRule {
            name: self.name.clone().ok_or_else(|| missing("name"))?,
            family: self.family.ok_or_else(|| missing("family"))?,
            polarity: self.polarity.ok_or_else(|| missing("polarity"))?,
            code: self.code,
            anchor: self.anchor,
            all_of: self.all_of,
            any_of: self.any_of,
            none_of: self.none_of,
        };
        Ok(rule)
    }
}

fn parse_pattern(value: &str) -> Result<Pattern, String> {
    let mut parts = value.splitn(3, ':');
    let (Some(kind), Some(scope), Some(needle)) = (parts.next(), parts.next(), parts.next()) else {
        return Err(format!("pattern `{value}` is not `<kind>:<scope>:<needle>`"));
    };
    let kind: PatternKind = kind.parse()?;
    let scope: Scope = scope.parse()?;
    Pattern::new(kind, scope, needle).map_err(|e| e.to_string())
}

/// The default 36-rule set.
pub fn builtin_rules() -> RuleSet {
    RuleSet::parse(DEFAULT_RULES).expect("built-in rules are valid")
}

pub fn load_rules(path: &Path) -> Result<RuleSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RuleSet::parse(&text)
}

pub fn save_rules(ruleset: &RuleSet, path: &Path) -> Result<()> {
    fs::write(path, ruleset.to_rule_file()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scan::extract_functions;

    fn eval(code: &str, text: &str) -> bool {
        let rules = builtin_rules();
        let source = ContractSource::new("t", text);
        let spans = extract_functions(&source.normalized_text);
        evaluate_rule(rules.rule(code).unwrap(), &source, &spans)
    }

    #[test]
    fn builtin_counts_and_names() {
        let rules = builtin_rules();
        assert_eq!(rules.rules().len(), 36);
        assert_eq!(rules.rule("A1").unwrap().name, "detect_proxy_call");
        assert_eq!(rules.rule("A5").unwrap().name, "detect_insurance_function");
        assert_eq!(rules.rule("C1").unwrap().name, "detect_unverified_minting");
        assert_eq!(rules.rule("E6").unwrap().name, "detect_duplicate_destruction");
        for family in Family::ALL {
            let codes: Vec<_> = rules.family_rules(family).iter().map(|r| r.code.clone()).collect();
            assert_eq!(codes, family.codes());
        }
    }

    #[test]
    fn empty_contract_fires_nothing() {
        for rule in builtin_rules().rules() {
            assert!(!eval(&rule.code, ""), "{} fired on empty source", rule.code);
            assert!(!eval(&rule.code, "contract Empty {}"), "{} fired on empty contract", rule.code);
        }
    }

    #[test]
    fn unguarded_mint_is_unverified() {
        let text = "contract M is ERC721 {\n function mint(address to, uint256 id) public { _mint(to, id); }\n}";
        assert!(eval("C1", text));
        assert!(eval("C3", text));
        let guarded = text.replace("public {", "public onlyOwner {");
        assert!(!eval("C1", &guarded));
        let sender_check = text.replace("{ _mint", "{ require(msg.sender == owner); _mint");
        assert!(!eval("C1", &sender_check));
        assert!(!eval("C3", &sender_check));
    }

    #[test]
    fn internal_mint_is_not_a_public_entry_point() {
        let text = "contract M { function _mint(address to, uint256 id) internal override { super._mint(to, id); } }";
        assert!(!eval("C1", text));
        assert!(!eval("C3", text));
    }

    #[test]
    fn reentrancy_ordering() {
        let bad = "contract R { mapping(address => uint) balances;\n function withdraw() external { uint a = balances[msg.sender]; require(a > 0); (bool ok, ) = payable(msg.sender).call{value: a}(\"\"); require(ok); balances[msg.sender] = 0; } }";
        assert!(eval("B1", bad));
        assert!(eval("B2", bad));
        assert!(eval("B3", bad));
        assert!(eval("B5", bad));
        assert!(!eval("B6", bad));
        assert!(!eval("B7", bad));
        assert!(!eval("B8", bad));
        let good = bad
            .replace("require(ok); balances[msg.sender] = 0;", "require(ok);")
            .replace("require(a > 0);", "require(a > 0); balances[msg.sender] = 0;");
        assert!(eval("B1", &good));
        assert!(!eval("B3", &good));
        assert!(!eval("B5", &good));
        let guarded = good.replace("contract R {", "contract R is ReentrancyGuard {");
        assert!(!eval("B2", &guarded));
    }

    #[test]
    fn unchecked_low_level_call() {
        let text = "contract U { function pay(address to) external { require(to != address(0)); to.call{value: 1}(\"\"); } }";
        assert!(eval("B6", text));
        let checked = text.replace("to.call", "(bool ok, ) = to.call");
        assert!(!eval("B6", &checked));
    }

    #[test]
    fn file_level_absence_needs_a_function() {
        assert!(!eval("D2", "contract C { uint x; }"));
        assert!(eval("D2", "contract C { function f() public {} }"));
        assert!(!eval("D2", "contract C { function f() public { require(true); } }"));
    }

    #[test]
    fn public_burn_exemplar() {
        let text = "contract B is ERC721 {\n function burn(uint256 tokenId) public { _burn(tokenId); }\n}";
        for code in ["E1", "E2", "E4", "E5", "E6"] {
            assert!(eval(code, text), "{code}");
        }
        assert!(!eval("E3", text));
        let owner_only = text.replace("public {", "public onlyOwner {");
        assert!(eval("E3", &owner_only));
        assert!(!eval("E1", &owner_only));
    }

    #[test]
    fn round_trip_through_file() {
        let rules = builtin_rules();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.rules");
        save_rules(&rules, &path).unwrap();
        assert_eq!(load_rules(&path).unwrap(), rules);
    }

    fn without_section(text: &str, code: &str) -> String {
        let header = format!("[rule {code}]");
        let mut out = String::new();
        let mut skipping = false;
        for line in text.lines() {
            if line.starts_with('[') {
                skipping = line == header;
            }
            if !skipping {
                out.push_str(line);
                out.push('\n');
            }
        }
        out
    }

    #[test]
    fn missing_rule_is_named() {
        let text = without_section(&builtin_rules().to_rule_file(), "D5");
        let err = RuleSet::parse(&text).unwrap_err();
        assert!(err.to_string().contains("D5"), "{err}");
    }

    #[test]
    fn unknown_code_rejected() {
        let mut text = builtin_rules().to_rule_file();
        text.push_str("\n[rule A7]\nname = extra\nfamily = RMP\npolarity = presence\nany_of = identifier:file:x\n");
        let err = RuleSet::parse(&text).unwrap_err();
        assert!(err.to_string().contains("unknown code"), "{err}");
        match err {
            Error::Rules { line, rule, .. } => {
                assert_eq!(rule.as_deref(), Some("A7"));
                assert!(line > 0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_rules_rejected() {
        let base = builtin_rules().to_rule_file();
        let dup = format!("{base}\n[rule A1]\nname = again\nfamily = RMP\npolarity = presence\nany_of = identifier:file:x\n");
        assert!(RuleSet::parse(&dup).unwrap_err().to_string().contains("duplicate"));

        let empty = base.replace(
            "[rule A1]\nname = detect_proxy_call\nfamily = RMP\npolarity = presence\nany_of = identifier:file:delegatecall\nany_of = identifier:file:proxy\nany_of = identifier:file:implementation\n",
            "[rule A1]\nname = detect_proxy_call\nfamily = RMP\npolarity = presence\n",
        );
        assert_ne!(empty, base);
        let err = RuleSet::parse(&empty).unwrap_err().to_string();
        assert!(err.contains("A1") && err.contains("empty"), "{err}");

        let wrong_family = base.replacen("family = RMP", "family = PB", 1);
        assert!(RuleSet::parse(&wrong_family).is_err());

        let bad_kind = base.replacen("identifier:file:delegatecall", "token:file:delegatecall", 1);
        assert!(RuleSet::parse(&bad_kind).unwrap_err().to_string().contains("pattern kind"));

        let bad_key = base.replacen("polarity = presence", "polarity = presence\ncolour = red", 1);
        assert!(RuleSet::parse(&bad_key).unwrap_err().to_string().contains("colour"));
    }
}
