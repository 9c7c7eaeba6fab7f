//! Symbolic message algebra with an injective text encoding.
//!
//! Atoms render as `kind'name'` with `'` and `\` escaped; compounds as
//! `op(arg,...)`. [`Term::parse`] inverts [`Term::encode`].

use std::fmt;

use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AtomKind {
    Id,
    Nonce,
    /// Symmetric key.
    Key,
    PrivKey,
    PubKey,
    Int,
    Label,
    DhSecret,
}

impl AtomKind {
    const ALL: [AtomKind; 8] = [
        AtomKind::Id,
        AtomKind::Nonce,
        AtomKind::Key,
        AtomKind::PrivKey,
        AtomKind::PubKey,
        AtomKind::Int,
        AtomKind::Label,
        AtomKind::DhSecret,
    ];

    fn tag(self) -> &'static str {
        match self {
            AtomKind::Id => "id",
            AtomKind::Nonce => "nonce",
            AtomKind::Key => "key",
            AtomKind::PrivKey => "priv",
            AtomKind::PubKey => "pub",
            AtomKind::Int => "int",
            AtomKind::Label => "label",
            AtomKind::DhSecret => "dhsec",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Atom(AtomKind, String),
    Pair(Box<Term>, Box<Term>),
    /// `{m}_k`; symmetric when `k` is a `Key` or `DhKey`, public-key when `k` is a `PubKey`.
    Enc(Box<Term>, Box<Term>),
    /// Signature of the first term under a private key.
    Sig(Box<Term>, Box<Term>),
    Hash(Box<Term>),
    /// `g^x` for a DH exponent `x`.
    Exp(Box<Term>),
    /// `g^(xy)`, arguments kept sorted.
    DhKey(Box<Term>, Box<Term>),
}

impl Term {
    pub fn atom(kind: AtomKind, name: impl Into<String>) -> Term {
        Term::Atom(kind, name.into())
    }

    pub fn id(name: impl Into<String>) -> Term {
        Term::atom(AtomKind::Id, name)
    }

    pub fn nonce(name: impl Into<String>) -> Term {
        Term::atom(AtomKind::Nonce, name)
    }

    pub fn key(name: impl Into<String>) -> Term {
        Term::atom(AtomKind::Key, name)
    }

    pub fn privkey(name: impl Into<String>) -> Term {
        Term::atom(AtomKind::PrivKey, name)
    }

    pub fn pubkey(name: impl Into<String>) -> Term {
        Term::atom(AtomKind::PubKey, name)
    }

    pub fn int(name: impl Into<String>) -> Term {
        Term::atom(AtomKind::Int, name)
    }

    pub fn label(name: impl Into<String>) -> Term {
        Term::atom(AtomKind::Label, name)
    }

    pub fn dh_secret(name: impl Into<String>) -> Term {
        Term::atom(AtomKind::DhSecret, name)
    }

    pub fn pair(a: Term, b: Term) -> Term {
        Term::Pair(Box::new(a), Box::new(b))
    }

    /// Right-nested pairing of two or more terms.
    pub fn tuple(mut parts: Vec<Term>) -> Term {
        let mut acc = parts.pop().expect("tuple of at least one term");
        while let Some(t) = parts.pop() {
            acc = Term::pair(t, acc);
        }
        acc
    }

    pub fn enc(m: Term, k: Term) -> Term {
        Term::Enc(Box::new(m), Box::new(k))
    }

    pub fn sig(m: Term, k: Term) -> Term {
        Term::Sig(Box::new(m), Box::new(k))
    }

    pub fn hash(m: Term) -> Term {
        Term::Hash(Box::new(m))
    }

    pub fn exp(x: Term) -> Term {
        Term::Exp(Box::new(x))
    }

    pub fn dh_key(x: Term, y: Term) -> Term {
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        Term::DhKey(Box::new(a), Box::new(b))
    }

    pub fn is_atom(&self) -> bool {
        matches!(self, Term::Atom(..))
    }

    pub fn depth(&self) -> usize {
        match self {
            Term::Atom(..) => 1,
            Term::Hash(a) | Term::Exp(a) => 1 + a.depth(),
            Term::Pair(a, b) | Term::Enc(a, b) | Term::Sig(a, b) | Term::DhKey(a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    pub fn children(&self) -> Vec<&Term> {
        match self {
            Term::Atom(..) => vec![],
            Term::Hash(a) | Term::Exp(a) => vec![a],
            Term::Pair(a, b) | Term::Enc(a, b) | Term::Sig(a, b) | Term::DhKey(a, b) => vec![a, b],
        }
    }

    /// All subterms, including `self`.
    pub fn subterms(&self) -> Vec<&Term> {
        let mut out = vec![self];
        let mut i = 0;
        while i < out.len() {
            out.extend(out[i].children());
            i += 1;
        }
        out
    }

    pub fn encode(&self) -> String {
        let mut s = String::new();
        self.write(&mut s);
        s
    }

    fn write(&self, out: &mut String) {
        let (op, args): (&str, Vec<&Term>) = match self {
            Term::Atom(kind, name) => {
                out.push_str(kind.tag());
                out.push('\'');
                for c in name.chars() {
                    if c == '\'' || c == '\\' {
                        out.push('\\');
                    }
                    out.push(c);
                }
                out.push('\'');
                return;
            }
            Term::Pair(..) => ("pair", self.children()),
            Term::Enc(..) => ("enc", self.children()),
            Term::Sig(..) => ("sig", self.children()),
            Term::Hash(..) => ("hash", self.children()),
            Term::Exp(..) => ("exp", self.children()),
            Term::DhKey(..) => ("dhkey", self.children()),
        };
        out.push_str(op);
        out.push('(');
        for (i, a) in args.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            a.write(out);
        }
        out.push(')');
    }

    /// Short content id: first 8 bytes of SHA-256 over the encoding, in hex.
    pub fn id_hash(&self) -> String {
        hex::encode(&Sha256::digest(self.encode().as_bytes())[..8])
    }

    pub fn parse(text: &str) -> Option<Term> {
        let mut p = Parser { s: text.as_bytes(), pos: 0 };
        let t = p.term()?;
        (p.pos == text.len()).then_some(t)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn eat(&mut self, c: u8) -> Option<()> {
        (self.s.get(self.pos) == Some(&c)).then(|| self.pos += 1)
    }

    fn word(&mut self) -> &str {
        let start = self.pos;
        while self.s.get(self.pos).is_some_and(u8::is_ascii_lowercase) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("")
    }

    fn term(&mut self) -> Option<Term> {
        let word = self.word().to_string();
        if let Some(kind) = AtomKind::ALL.iter().find(|k| k.tag() == word) {
            self.eat(b'\'')?;
            let mut name = Vec::new();
            loop {
                match *self.s.get(self.pos)? {
                    b'\\' => {
                        name.push(*self.s.get(self.pos + 1)?);
                        self.pos += 2;
                    }
                    b'\'' => {
                        self.pos += 1;
                        break;
                    }
                    c => {
                        name.push(c);
                        self.pos += 1;
                    }
                }
            }
            return Some(Term::Atom(*kind, String::from_utf8(name).ok()?));
        }
        self.eat(b'(')?;
        let a = self.term()?;
        let t = match word.as_str() {
            "hash" => Term::hash(a),
            "exp" => Term::exp(a),
            op => {
                self.eat(b',')?;
                let b = self.term()?;
                match op {
                    "pair" => Term::pair(a, b),
                    "enc" => Term::enc(a, b),
                    "sig" => Term::sig(a, b),
                    "dhkey" if a <= b => Term::DhKey(Box::new(a), Box::new(b)),
                    _ => return None,
                }
            }
        };
        self.eat(b')')?;
        Some(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoding_examples() {
        let t = Term::tuple(vec![Term::id("A"), Term::id("B"), Term::label("INIT")]);
        assert_eq!(t.encode(), "pair(id'A',pair(id'B',label'INIT'))");
        assert_eq!(Term::parse(&t.encode()), Some(t));
        let odd = Term::int("it's\\x");
        assert_eq!(odd.encode(), "int'it\\'s\\\\x'");
        assert_eq!(Term::parse(&odd.encode()), Some(odd));
        assert_ne!(Term::pair(Term::id("a,b"), Term::id("c")).encode(), Term::pair(Term::id("a"), Term::id("b,c")).encode());
        assert_eq!(Term::parse("pair(id'A')"), None);
    }

    #[test]
    fn dh_key_is_symmetric() {
        let (x, y) = (Term::dh_secret("x"), Term::dh_secret("y"));
        assert_eq!(Term::dh_key(x.clone(), y.clone()), Term::dh_key(y, x));
    }

    #[test]
    fn depth_and_subterms() {
        let t = Term::enc(Term::pair(Term::id("A"), Term::nonce("n2")), Term::key("k"));
        assert_eq!(t.depth(), 3);
        assert_eq!(t.subterms().len(), 5);
    }
}
