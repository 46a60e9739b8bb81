//! Query model, a small SQL front end for `SELECT COUNT(*)` equi-join
//! queries, and decomposition of the join graph into star groups.
//!
//! A *star group* is a connected set of column equalities over one key
//! domain. Groups are linked through *bridge* aliases that contribute a
//! column to two groups (for example a table joined on both its own key
//! and a foreign key). The links form a tree rooted at group 0.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog::{QualifiedColumn, Schema, UnionFind, ValueKind};
use crate::error::{Error, Result};
use crate::predicate::{CmpOp, Literal, Predicate, PredicateOp};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnRef {
    /// Table alias; empty only for unqualified columns before resolution.
    pub alias: String,
    pub column: String,
}

impl ColumnRef {
    pub fn new(alias: impl Into<String>, column: impl Into<String>) -> Self {
        ColumnRef {
            alias: alias.into(),
            column: column.into(),
        }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.alias.is_empty() {
            write!(f, "{}", self.column)
        } else {
            write!(f, "{}.{}", self.alias, self.column)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRef {
    pub table: String,
    pub alias: String,
}

/// Undirected equality; `left <= right` always holds.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JoinEdge {
    pub left: ColumnRef,
    pub right: ColumnRef,
}

impl JoinEdge {
    pub fn new(a: ColumnRef, b: ColumnRef) -> Self {
        if a <= b {
            JoinEdge { left: a, right: b }
        } else {
            JoinEdge { left: b, right: a }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub tables: Vec<TableRef>,
    pub joins: Vec<JoinEdge>,
    pub predicates: Vec<Predicate>,
}

impl Query {
    pub fn table_of(&self, alias: &str) -> Option<&str> {
        self.tables
            .iter()
            .find(|t| t.alias == alias)
            .map(|t| t.table.as_str())
    }

    pub fn alias_index(&self, alias: &str) -> Option<usize> {
        self.tables.iter().position(|t| t.alias == alias)
    }

    pub fn qualified(&self, c: &ColumnRef) -> Option<QualifiedColumn> {
        self.table_of(&c.alias)
            .map(|t| QualifiedColumn::new(t, &c.column))
    }

    pub fn predicates_on<'a>(&'a self, alias: &'a str) -> impl Iterator<Item = &'a Predicate> + 'a {
        self.predicates.iter().filter(move |p| p.column.alias == alias)
    }

    /// Join edges as a sorted set, for order-insensitive comparison.
    pub fn edge_set(&self) -> BTreeSet<JoinEdge> {
        self.joins.iter().cloned().collect()
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&unparse(self))
    }
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Str(String),
    Sym(&'static str),
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
}

fn syntax(offset: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        offset,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if !c.is_ascii() {
            return Err(syntax(i, "non-ASCII input"));
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(text[start..i].to_string()),
                offset: start,
            });
            continue;
        }
        if c.is_ascii_digit() || (c == b'-' && bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit() || *b == b'.')) || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            i += 1;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            out.push(Token {
                tok: Tok::Number(text[start..i].to_string()),
                offset: start,
            });
            continue;
        }
        if c == b'\'' {
            let mut s = String::new();
            i += 1;
            loop {
                match bytes.get(i) {
                    None => return Err(syntax(start, "unterminated string literal")),
                    Some(b'\'') if bytes.get(i + 1) == Some(&b'\'') => {
                        s.push('\'');
                        i += 2;
                    }
                    Some(b'\'') => {
                        i += 1;
                        break;
                    }
                    Some(&b) => {
                        s.push(b as char);
                        i += 1;
                    }
                }
            }
            out.push(Token {
                tok: Tok::Str(s),
                offset: start,
            });
            continue;
        }
        let two = text.get(i..i + 2);
        let sym: &'static str = match two {
            Some("<=") => "<=",
            Some(">=") => ">=",
            Some("<>") | Some("!=") => "<>",
            _ => match c {
                b'=' => "=",
                b'<' => "<",
                b'>' => ">",
                b'(' => "(",
                b')' => ")",
                b',' => ",",
                b'.' => ".",
                b'*' => "*",
                b';' => ";",
                _ => return Err(syntax(i, format!("unexpected character {:?}", c as char))),
            },
        };
        i += sym.len();
        out.push(Token {
            tok: Tok::Sym(sym),
            offset: start,
        });
    }
    out.push(Token {
        tok: Tok::End,
        offset: text.len(),
    });
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser

const RESERVED: &[&str] = &[
    "select", "count", "from", "as", "where", "and", "or", "between", "in", "not", "join", "on",
    "group", "order", "by", "distinct", "union", "having", "limit",
];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

enum Operand {
    Column(ColumnRef),
    Literal(Literal),
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.is_keyword(kw) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<()> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(syntax(
                self.peek().offset,
                format!("expected {}", kw.to_ascii_uppercase()),
            ))
        }
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(self.peek().tok, Tok::Sym(x) if x == s) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(syntax(self.peek().offset, format!("expected '{s}'")))
        }
    }

    fn ident(&mut self) -> Result<String> {
        let t = self.next();
        match t.tok {
            Tok::Ident(s) if !RESERVED.contains(&s.to_ascii_lowercase().as_str()) => Ok(s),
            _ => Err(syntax(t.offset, "expected identifier")),
        }
    }

    fn unsupported_keyword(&self) -> Option<Error> {
        let Tok::Ident(s) = &self.peek().tok else {
            return None;
        };
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "or" | "not" | "join" | "on" | "group" | "order" | "distinct" | "union" | "having"
            | "limit" => Some(Error::Unsupported(format!(
                "{} at byte {}",
                lower.to_ascii_uppercase(),
                self.peek().offset
            ))),
            _ => None,
        }
    }

    fn operand(&mut self) -> Result<Operand> {
        let t = self.next();
        match t.tok {
            Tok::Number(n) => Ok(Operand::Literal(number(&n, t.offset)?)),
            Tok::Str(s) => Ok(Operand::Literal(Literal::Text(s))),
            Tok::Ident(first) => {
                if RESERVED.contains(&first.to_ascii_lowercase().as_str()) {
                    return Err(syntax(t.offset, format!("unexpected keyword {first}")));
                }
                if self.eat_sym(".") {
                    let col = self.ident()?;
                    Ok(Operand::Column(ColumnRef::new(first, col)))
                } else {
                    Ok(Operand::Column(ColumnRef::new("", first)))
                }
            }
            _ => Err(syntax(t.offset, "expected column or literal")),
        }
    }

    fn literal(&mut self) -> Result<Literal> {
        let off = self.peek().offset;
        match self.operand()? {
            Operand::Literal(l) => Ok(l),
            Operand::Column(_) => Err(syntax(off, "expected literal")),
        }
    }

    fn conjunct(&mut self, joins: &mut Vec<JoinEdge>, preds: &mut Vec<Predicate>) -> Result<()> {
        if let Some(e) = self.unsupported_keyword() {
            return Err(e);
        }
        if self.peek().tok == Tok::Sym("(") {
            return Err(Error::Unsupported(format!(
                "parenthesized condition at byte {}",
                self.peek().offset
            )));
        }
        let lhs_off = self.peek().offset;
        let lhs = self.operand()?;
        if self.is_keyword("not") {
            return Err(Error::Unsupported(format!("NOT at byte {}", self.peek().offset)));
        }
        if self.eat_keyword("between") {
            let Operand::Column(col) = lhs else {
                return Err(syntax(lhs_off, "BETWEEN needs a column on the left"));
            };
            let lo = self.literal()?;
            self.expect_keyword("and")?;
            let hi = self.literal()?;
            preds.push(Predicate::new(col, PredicateOp::Between(lo, hi)));
            return Ok(());
        }
        if self.eat_keyword("in") {
            let Operand::Column(col) = lhs else {
                return Err(syntax(lhs_off, "IN needs a column on the left"));
            };
            self.expect_sym("(")?;
            let mut items = vec![self.literal()?];
            while self.eat_sym(",") {
                items.push(self.literal()?);
            }
            self.expect_sym(")")?;
            preds.push(Predicate::new(col, PredicateOp::In(items)));
            return Ok(());
        }
        let op_tok = self.next();
        let op = match op_tok.tok {
            Tok::Sym("=") => CmpOp::Eq,
            Tok::Sym("<") => CmpOp::Lt,
            Tok::Sym("<=") => CmpOp::Le,
            Tok::Sym(">") => CmpOp::Gt,
            Tok::Sym(">=") => CmpOp::Ge,
            Tok::Sym("<>") => {
                return Err(Error::Unsupported(format!(
                    "inequality operator at byte {}",
                    op_tok.offset
                )))
            }
            _ => return Err(syntax(op_tok.offset, "expected comparison operator")),
        };
        let rhs_off = self.peek().offset;
        let rhs = self.operand()?;
        match (lhs, rhs) {
            (Operand::Column(a), Operand::Column(b)) => {
                if op != CmpOp::Eq {
                    return Err(Error::Unsupported(format!(
                        "non-equality comparison between columns at byte {rhs_off}"
                    )));
                }
                joins.push(JoinEdge::new(a, b));
            }
            (Operand::Column(c), Operand::Literal(l)) => {
                preds.push(Predicate::new(c, PredicateOp::Cmp(op, l)));
            }
            (Operand::Literal(l), Operand::Column(c)) => {
                preds.push(Predicate::new(c, PredicateOp::Cmp(op.flipped(), l)));
            }
            (Operand::Literal(_), Operand::Literal(_)) => {
                return Err(syntax(lhs_off, "comparison between two literals"));
            }
        }
        Ok(())
    }

    fn query(&mut self) -> Result<Query> {
        self.expect_keyword("select")?;
        if self.is_keyword("distinct") {
            return Err(self.unsupported_keyword().expect("distinct"));
        }
        self.expect_keyword("count")?;
        self.expect_sym("(")?;
        self.expect_sym("*")?;
        self.expect_sym(")")?;
        self.expect_keyword("from")?;
        let mut tables = Vec::new();
        loop {
            let off = self.peek().offset;
            let table = self.ident()?;
            let bare_alias = matches!(&self.peek().tok,
                Tok::Ident(s) if !RESERVED.contains(&s.to_ascii_lowercase().as_str()));
            let alias = if self.eat_keyword("as") || bare_alias {
                self.ident()?
            } else {
                table.clone()
            };
            if tables.iter().any(|t: &TableRef| t.alias == alias) {
                return Err(syntax(off, format!("duplicate alias {alias}")));
            }
            tables.push(TableRef { table, alias });
            if !self.eat_sym(",") {
                break;
            }
        }
        let mut joins = Vec::new();
        let mut preds = Vec::new();
        if self.eat_keyword("where") {
            self.conjunct(&mut joins, &mut preds)?;
            loop {
                if self.eat_keyword("and") {
                    self.conjunct(&mut joins, &mut preds)?;
                } else if let Some(e) = self.unsupported_keyword() {
                    return Err(e);
                } else {
                    break;
                }
            }
        } else if let Some(e) = self.unsupported_keyword() {
            return Err(e);
        }
        self.eat_sym(";");
        let t = self.peek();
        if t.tok != Tok::End {
            return Err(syntax(t.offset, "unexpected trailing input"));
        }
        let mut seen = BTreeSet::new();
        joins.retain(|e| seen.insert(e.clone()));
        let mut q = Query {
            tables,
            joins,
            predicates: preds,
        };
        if q.tables.len() == 1 {
            let alias = q.tables[0].alias.clone();
            qualify_all(&mut q, |_| Some(alias.clone()));
        }
        Ok(q)
    }
}

fn number(text: &str, offset: usize) -> Result<Literal> {
    let is_real = text.contains(['.', 'e', 'E']);
    if is_real {
        text.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Literal::Real)
            .ok_or_else(|| syntax(offset, format!("bad number {text}")))
    } else {
        text.parse::<i64>()
            .map(Literal::Int)
            .map_err(|_| syntax(offset, format!("integer {text} out of range")))
    }
}

fn qualify_all(q: &mut Query, mut f: impl FnMut(&str) -> Option<String>) {
    let mut fix = |c: &mut ColumnRef| {
        if c.alias.is_empty() {
            if let Some(a) = f(&c.column) {
                c.alias = a;
            }
        }
    };
    for e in &mut q.joins {
        fix(&mut e.left);
        fix(&mut e.right);
    }
    for p in &mut q.predicates {
        fix(&mut p.column);
    }
    let edges: Vec<JoinEdge> = q
        .joins
        .drain(..)
        .map(|e| JoinEdge::new(e.left, e.right))
        .collect();
    q.joins = edges;
}

/// Parse one query. Column references are not checked against a schema;
/// unqualified columns are attributed to the only table when there is one.
pub fn parse_sql(text: &str) -> Result<Query> {
    let toks = lex(text)?;
    Parser { toks, pos: 0 }.query()
}

/// Parse and resolve against `schema` in one step.
pub fn parse_query(text: &str, schema: &Schema) -> Result<Query> {
    let mut q = parse_sql(text)?;
    resolve(&mut q, schema)?;
    Ok(q)
}

/// Resolve unqualified columns, check every table and column exists, and
/// map literals to the kind of their column.
pub fn resolve(q: &mut Query, schema: &Schema) -> Result<()> {
    for t in &q.tables {
        if schema.table(&t.table).is_none() {
            return Err(Error::UnknownTable(t.table.clone()));
        }
    }
    let tables = q.tables.clone();
    let mut failure = None;
    qualify_all(q, |col| {
        let owners: Vec<&TableRef> = tables
            .iter()
            .filter(|t| schema.table(&t.table).is_some_and(|d| d.column(col).is_some()))
            .collect();
        match owners.as_slice() {
            [one] => Some(one.alias.clone()),
            [] => {
                failure.get_or_insert(Error::UnknownColumn(col.to_string()));
                None
            }
            _ => {
                failure.get_or_insert(Error::AmbiguousColumn(col.to_string()));
                None
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let check = |c: &ColumnRef| -> Result<&crate::catalog::ColumnDef> {
        let table = q
            .table_of(&c.alias)
            .ok_or_else(|| Error::UnknownTable(c.alias.clone()))?;
        schema
            .table(table)
            .and_then(|t| t.column(&c.column))
            .ok_or_else(|| Error::UnknownColumn(format!("{table}.{}", c.column)))
    };
    for e in &q.joins {
        check(&e.left)?;
        check(&e.right)?;
    }
    let mut mapped = Vec::with_capacity(q.predicates.len());
    for p in &q.predicates {
        let def = check(&p.column)?;
        let op = map_literals(&p.op, def.kind).map_err(|m| {
            Error::UnsupportedPredicate(format!("{p}: {m}"))
        })?;
        mapped.push(Predicate::new(p.column.clone(), op));
    }
    q.predicates = mapped;
    Ok(())
}

fn map_literals(op: &PredicateOp, kind: ValueKind) -> std::result::Result<PredicateOp, String> {
    let map = |l: &Literal| -> std::result::Result<Literal, String> {
        match (kind, l) {
            (ValueKind::Categorical, Literal::Text(_)) => Ok(l.clone()),
            (ValueKind::Categorical, _) => Err(format!("numeric literal {l} on a text column")),
            (_, Literal::Text(_)) => Err(format!("text literal {l} on a numeric column")),
            (ValueKind::Integer, Literal::Real(v)) if v.fract() == 0.0 && v.abs() < 9.0e15 => {
                Ok(Literal::Int(*v as i64))
            }
            (ValueKind::Real, Literal::Int(v)) => Ok(Literal::Real(*v as f64)),
            _ => Ok(l.clone()),
        }
    };
    Ok(match op {
        PredicateOp::Cmp(c, l) => PredicateOp::Cmp(*c, map(l)?),
        PredicateOp::Between(a, b) => PredicateOp::Between(map(a)?, map(b)?),
        PredicateOp::In(items) => {
            PredicateOp::In(items.iter().map(map).collect::<std::result::Result<_, _>>()?)
        }
    })
}

/// Render a query in the accepted grammar; `parse_sql(unparse(q))`
/// reproduces `q`.
pub fn unparse(q: &Query) -> String {
    let mut s = String::from("SELECT COUNT(*) FROM ");
    let froms: Vec<String> = q
        .tables
        .iter()
        .map(|t| {
            if t.alias == t.table {
                t.table.clone()
            } else {
                format!("{} AS {}", t.table, t.alias)
            }
        })
        .collect();
    s.push_str(&froms.join(", "));
    let mut conds: Vec<String> = q
        .joins
        .iter()
        .map(|e| format!("{} = {}", e.left, e.right))
        .collect();
    conds.extend(q.predicates.iter().map(|p| p.to_string()));
    if !conds.is_empty() {
        s.push_str(" WHERE ");
        s.push_str(&conds.join(" AND "));
    }
    s
}

// ---------------------------------------------------------------------------
// Join graph

/// Equality-connected set of key columns over one domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarGroup {
    pub domain: String,
    /// One column per alias, in FROM order.
    pub members: Vec<ColumnRef>,
    pub edges: Vec<JoinEdge>,
}

impl StarGroup {
    pub fn member_for(&self, alias: &str) -> Option<&ColumnRef> {
        self.members.iter().find(|m| m.alias == alias)
    }
}

/// `bridge` contributes `parent_column` to group `parent` and
/// `child_column` to group `child`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainLink {
    pub parent: usize,
    pub child: usize,
    pub bridge: String,
    pub parent_column: ColumnRef,
    pub child_column: ColumnRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubQueryPlan {
    pub groups: Vec<StarGroup>,
    /// Tree edges in BFS order from group 0.
    pub links: Vec<ChainLink>,
    /// For each alias, the group nearest the root that contains it. Filters
    /// on an alias are applied there. Aliases of a single-table query have
    /// no entry.
    pub home: BTreeMap<String, usize>,
}

impl SubQueryPlan {
    pub fn children(&self, group: usize) -> impl Iterator<Item = &ChainLink> {
        self.links.iter().filter(move |l| l.parent == group)
    }

    pub fn parent_link(&self, group: usize) -> Option<&ChainLink> {
        self.links.iter().find(|l| l.child == group)
    }
}

fn equality_components(q: &Query) -> Vec<BTreeSet<ColumnRef>> {
    let mut uf: UnionFind<ColumnRef> = UnionFind::default();
    for e in &q.joins {
        uf.union(e.left.clone(), e.right.clone());
    }
    uf.groups().into_values().collect()
}

/// Reject join graphs with cycles. Each equality component connects the
/// aliases it touches; a cycle exists when two aliases end up connected
/// along two different routes.
pub fn validate_acyclic(q: &Query, _schema: &Schema) -> Result<()> {
    let mut uf: UnionFind<String> = UnionFind::default();
    for comp in equality_components(q) {
        let mut aliases: Vec<&str> = comp.iter().map(|c| c.alias.as_str()).collect();
        let n = aliases.len();
        aliases.dedup();
        if aliases.len() != n {
            return Err(Error::CyclicJoin(format!(
                "alias {} joins one key with two of its own columns",
                comp.iter()
                    .zip(comp.iter().skip(1))
                    .find(|(a, b)| a.alias == b.alias)
                    .map(|(a, _)| a.alias.clone())
                    .unwrap_or_default()
            )));
        }
        for w in aliases.windows(2) {
            if !uf.union(w[0].to_string(), w[1].to_string()) {
                return Err(Error::CyclicJoin(format!(
                    "{} and {} are joined along more than one path",
                    w[0], w[1]
                )));
            }
        }
    }
    Ok(())
}

/// Split the join graph into star groups and chain links.
pub fn decompose(q: &Query, schema: &Schema) -> Result<SubQueryPlan> {
    validate_acyclic(q, schema)?;
    let order = |c: &ColumnRef| q.alias_index(&c.alias).unwrap_or(usize::MAX);
    let mut groups = Vec::new();
    for comp in equality_components(q) {
        let mut domain: Option<(String, &ColumnRef)> = None;
        for c in &comp {
            let qc = q
                .qualified(c)
                .ok_or_else(|| Error::UnknownTable(c.alias.clone()))?;
            let d = schema.domain_of(&qc).ok_or_else(|| {
                Error::InvalidArgument(format!("join column {qc} is not a key of any key domain"))
            })?;
            match &domain {
                None => domain = Some((d, c)),
                Some((prev, first)) if *prev != d => {
                    return Err(Error::DomainMismatch {
                        left: format!("{first} ({prev})"),
                        right: format!("{c} ({d})"),
                    })
                }
                _ => {}
            }
        }
        let mut members: Vec<ColumnRef> = comp.iter().cloned().collect();
        members.sort_by_key(|c| (order(c), c.clone()));
        let edges = q
            .joins
            .iter()
            .filter(|e| comp.contains(&e.left))
            .cloned()
            .collect();
        groups.push(StarGroup {
            domain: domain.expect("non-empty component").0,
            members,
            edges,
        });
    }
    let sort_key = |g: &StarGroup| {
        let mut names: Vec<(String, String, String)> = g
            .members
            .iter()
            .map(|m| {
                (
                    q.table_of(&m.alias).unwrap_or_default().to_string(),
                    m.alias.clone(),
                    m.column.clone(),
                )
            })
            .collect();
        names.sort();
        names
    };
    groups.sort_by_key(sort_key);

    let mut home = BTreeMap::new();
    let mut links = Vec::new();
    if !groups.is_empty() {
        let mut visited = vec![false; groups.len()];
        let mut queue = VecDeque::from([0usize]);
        visited[0] = true;
        while let Some(g) = queue.pop_front() {
            for m in &groups[g].members {
                home.entry(m.alias.clone()).or_insert(g);
            }
            for m in groups[g].members.clone() {
                for (h, other) in groups.iter().enumerate() {
                    if visited[h] {
                        continue;
                    }
                    if let Some(cm) = other.member_for(&m.alias) {
                        visited[h] = true;
                        links.push(ChainLink {
                            parent: g,
                            child: h,
                            bridge: m.alias.clone(),
                            parent_column: m.clone(),
                            child_column: cm.clone(),
                        });
                        queue.push_back(h);
                    }
                }
            }
        }
    }
    let unreached: Vec<&str> = q
        .tables
        .iter()
        .map(|t| t.alias.as_str())
        .filter(|a| !home.contains_key(*a))
        .collect();
    if q.tables.len() > 1 && !unreached.is_empty() {
        return Err(Error::DisconnectedJoin(format!(
            "{} not joined to the rest of the query",
            unreached.join(", ")
        )));
    }
    Ok(SubQueryPlan {
        groups,
        links,
        home,
    })
}
