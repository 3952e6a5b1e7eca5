// SPDX-License-Identifier: Apache-2.0

//! ISCAS-style `.bench` reader and writer.
//!
//! Statements are `INPUT(n)`, `OUTPUT(n)`, `q = DFF(d)` and
//! `y = GATE(a, b, ...)`. Keywords are case-insensitive and `#` starts a
//! comment. Statements are delimited by their closing parenthesis, so several
//! may share one line.

use std::fmt::Write as _;

use super::{GateKind, Netlist, NetlistBuilder, NetlistError, Span};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Ident(String),
    LParen,
    RParen,
    Comma,
    Equals,
}

fn is_ident_char(c: char) -> bool {
    !c.is_whitespace() && !matches!(c, '(' | ')' | ',' | '=' | '#')
}

fn tokenize(text: &str) -> Vec<(Token, Span)> {
    let mut tokens = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = match line.find('#') {
            Some(cut) => &line[..cut],
            None => line,
        };
        let chars: Vec<(usize, char)> = line.char_indices().collect();
        let mut i = 0;
        while i < chars.len() {
            let (_, c) = chars[i];
            let span = Span { line: line_no + 1, column: i + 1 };
            let single = match c {
                '(' => Some(Token::LParen),
                ')' => Some(Token::RParen),
                ',' => Some(Token::Comma),
                '=' => Some(Token::Equals),
                _ => None,
            };
            if let Some(tok) = single {
                tokens.push((tok, span));
                i += 1;
            } else if c.is_whitespace() {
                i += 1;
            } else {
                let start = i;
                while i < chars.len() && is_ident_char(chars[i].1) {
                    i += 1;
                }
                let word: String = chars[start..i].iter().map(|&(_, c)| c).collect();
                tokens.push((Token::Ident(word), span));
            }
        }
    }
    tokens
}

struct Parser {
    tokens: Vec<(Token, Span)>,
    pos: usize,
}

impl Parser {
    fn span(&self) -> Span {
        self.tokens
            .get(self.pos)
            .or(self.tokens.last())
            .map(|(_, s)| *s)
            .unwrap_or_default()
    }

    fn syntax(&self, message: impl Into<String>) -> NetlistError {
        NetlistError::Syntax { span: self.span(), message: message.into() }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Span), NetlistError> {
        match self.tokens.get(self.pos) {
            Some((Token::Ident(s), span)) => {
                let out = (s.clone(), *span);
                self.pos += 1;
                Ok(out)
            }
            _ => Err(self.syntax(format!("expected {what}"))),
        }
    }

    fn expect(&mut self, tok: Token, what: &str) -> Result<(), NetlistError> {
        if self.tokens.get(self.pos).map(|(t, _)| t) == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.syntax(format!("expected {what}")))
        }
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    /// `( name {, name} )`
    fn arguments(&mut self) -> Result<Vec<String>, NetlistError> {
        self.expect(Token::LParen, "`(`")?;
        let mut args = vec![self.ident("net name")?.0];
        while self.peek() == Some(&Token::Comma) {
            self.pos += 1;
            args.push(self.ident("net name")?.0);
        }
        self.expect(Token::RParen, "`)`")?;
        Ok(args)
    }
}

/// Parses bench text into a validated [`Netlist`].
pub fn parse_bench(text: &str) -> Result<Netlist, NetlistError> {
    let mut p = Parser { tokens: tokenize(text), pos: 0 };
    let mut b = NetlistBuilder::new();
    while p.pos < p.tokens.len() {
        let (head, span) = p.ident("statement")?;
        match p.peek() {
            Some(Token::LParen) => {
                let args = p.arguments()?;
                let [net] = args.as_slice() else {
                    return Err(NetlistError::Syntax { span, message: format!("{head} takes one net") });
                };
                match head.to_ascii_uppercase().as_str() {
                    "INPUT" => b.input_at(net, span),
                    "OUTPUT" => b.output_at(net, span),
                    _ => {
                        return Err(NetlistError::Syntax {
                            span,
                            message: format!("unknown declaration `{head}`"),
                        })
                    }
                };
            }
            Some(Token::Equals) => {
                p.pos += 1;
                let (keyword, kspan) = p.ident("gate type")?;
                let args = p.arguments()?;
                let ins: Vec<&str> = args.iter().map(String::as_str).collect();
                if keyword.eq_ignore_ascii_case("DFF") {
                    let [d] = ins.as_slice() else {
                        return Err(NetlistError::Syntax { span: kspan, message: "DFF takes one net".into() });
                    };
                    b.flop_at(d, &head, span);
                } else {
                    let kind = GateKind::from_keyword(&keyword)
                        .ok_or(NetlistError::UnknownGate { span: kspan, keyword: keyword.clone() })?;
                    b.gate_at(kind, &ins, &head, span);
                }
            }
            _ => return Err(p.syntax("expected `(` or `=`")),
        }
    }
    b.build()
}

/// Renders a netlist as bench text. Gates are emitted in evaluation order.
pub fn write_bench(n: &Netlist) -> String {
    let mut out = String::new();
    for &i in n.inputs() {
        writeln!(out, "INPUT({})", n.name(i)).unwrap();
    }
    for &o in n.outputs() {
        writeln!(out, "OUTPUT({})", n.name(o)).unwrap();
    }
    out.push('\n');
    for f in n.flops() {
        writeln!(out, "{} = DFF({})", n.name(f.q), n.name(f.d)).unwrap();
    }
    for &g in n.topo_order() {
        let gate = &n.gates()[g];
        let ins: Vec<&str> = gate.inputs.iter().map(|&i| n.name(i)).collect();
        writeln!(out, "{} = {}({})", n.name(gate.output), gate.kind, ins.join(", ")).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_netlist() {
        let n = parse_bench("INPUT(a) OUTPUT(y) y=NOT(a)").unwrap();
        assert_eq!(n.inputs().len(), 1);
        assert_eq!(n.outputs().len(), 1);
        assert_eq!(n.gates().len(), 1);
        assert!(n.flops().is_empty());
    }

    #[test]
    fn single_flop() {
        let n = parse_bench("INPUT(a) OUTPUT(q) q=DFF(a)").unwrap();
        assert_eq!(n.flops().len(), 1);
        assert!(n.gates().is_empty());
    }

    #[test]
    fn undefined_net_reports_line() {
        let err = parse_bench("INPUT(b)\nOUTPUT(y)\ny=AND(a,b)\n").unwrap_err();
        match err {
            NetlistError::UndefinedNet { span, net } => {
                assert_eq!(net, "a");
                assert_eq!(span.line, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_driver_reports_line() {
        let err = parse_bench("INPUT(a)\nOUTPUT(y)\ny = NOT(a)\ny = BUFF(a)\n").unwrap_err();
        assert!(matches!(err, NetlistError::DuplicateDriver { span: Span { line: 4, column: 1 }, .. }));
    }

    #[test]
    fn cycle_is_rejected() {
        let err = parse_bench("INPUT(a)\nOUTPUT(y)\nx = AND(a, y)\ny = NOT(x)\n").unwrap_err();
        assert!(matches!(err, NetlistError::CombinationalCycle { .. }));
    }

    #[test]
    fn comments_and_case() {
        let text = "# header\ninput(G1) # trailing\nINPUT(G2)\noutput(G3)\nG3 = nand(G1, G2)\n";
        let n = parse_bench(text).unwrap();
        assert_eq!(n.gates()[0].kind, GateKind::Nand);
    }

    #[test]
    fn unknown_gate_and_syntax() {
        assert!(matches!(parse_bench("INPUT(a)\ny = MUX(a)"), Err(NetlistError::UnknownGate { .. })));
        assert!(matches!(parse_bench("INPUT(a"), Err(NetlistError::Syntax { .. })));
        assert!(matches!(parse_bench("INPUT(a, b)"), Err(NetlistError::Syntax { .. })));
    }

    #[test]
    fn writer_output_reparses() {
        let text = "INPUT(a)\nINPUT(b)\nOUTPUT(y)\nq = DFF(d)\nd = XOR(a, q)\ny = OR(d, b, q)\n";
        let n = parse_bench(text).unwrap();
        let again = parse_bench(&write_bench(&n)).unwrap();
        assert_eq!(again.gates().len(), 2);
        assert_eq!(again.flops().len(), 1);
        assert_eq!(write_bench(&again), write_bench(&n));
    }
}
