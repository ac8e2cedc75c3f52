//! Language-neutral syntax tree built from the parser's AST.
//!
//! Node kinds and child order follow the reference interpreter's own `ast`
//! module (`_fields` order, expression contexts folded into the node, operator
//! nodes kept as leaf children). Everything downstream, including the
//! CodeBLEU subtree and data-flow components, walks this tree only.

use rustpython_parser::ast::{self, Ranged};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ctx {
    Load,
    Store,
    Del,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    None,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntaxNode {
    pub kind: &'static str,
    /// Field of the parent this node hangs off (`"body"`, `"targets"`, ...).
    pub field: &'static str,
    /// Byte range in the parsed source. Always covers every child span.
    pub span: Option<(usize, usize)>,
    /// Name id, attribute name, argument/keyword name, alias name, def name,
    /// handler name or `ImportFrom` module, depending on `kind`.
    pub ident: Option<String>,
    pub asname: Option<String>,
    pub ctx: Option<Ctx>,
    pub literal: Option<Literal>,
    /// `global` / `nonlocal` names.
    pub names: Vec<String>,
    pub children: Vec<SyntaxNode>,
}

impl SyntaxNode {
    fn new(kind: &'static str, field: &'static str, span: Option<(usize, usize)>) -> Self {
        SyntaxNode { kind, field, span, ident: None, asname: None, ctx: None, literal: None, names: Vec::new(), children: Vec::new() }
    }

    fn leaf(kind: &'static str, field: &'static str) -> Self {
        Self::new(kind, field, None)
    }

    fn ident(mut self, id: impl Into<String>) -> Self {
        self.ident = Some(id.into());
        self
    }

    fn ctx(mut self, ctx: &ast::ExprContext) -> Self {
        self.ctx = Some(match ctx {
            ast::ExprContext::Load => Ctx::Load,
            ast::ExprContext::Store => Ctx::Store,
            ast::ExprContext::Del => Ctx::Del,
        });
        self
    }

    fn push(&mut self, child: SyntaxNode) {
        if let Some((cs, ce)) = child.span {
            self.span = Some(match self.span {
                Some((s, e)) => (s.min(cs), e.max(ce)),
                None => (cs, ce),
            });
        }
        self.children.push(child);
    }

    fn with(mut self, child: SyntaxNode) -> Self {
        self.push(child);
        self
    }

    fn with_all(mut self, children: impl IntoIterator<Item = SyntaxNode>) -> Self {
        for c in children {
            self.push(c);
        }
        self
    }

    fn with_opt(self, child: Option<SyntaxNode>) -> Self {
        match child {
            Some(c) => self.with(c),
            None => self,
        }
    }

    /// Children hanging off a given field.
    pub fn field_children<'a>(&'a self, field: &'a str) -> impl Iterator<Item = &'a SyntaxNode> + 'a {
        self.children.iter().filter(move |c| c.field == field)
    }

    pub fn first_field(&self, field: &str) -> Option<&SyntaxNode> {
        self.children.iter().find(|c| c.field == field)
    }

    /// Pre-order traversal.
    pub fn walk(&self, f: &mut dyn FnMut(&SyntaxNode)) {
        f(self);
        for c in &self.children {
            c.walk(f);
        }
    }

    pub fn is_name(&self) -> bool {
        self.kind == "Name"
    }

    /// Identifier at the root of an attribute/subscript/call chain, e.g. `df`
    /// for `df['a'].fillna(0).sum`.
    pub fn root_name(&self) -> Option<&str> {
        match self.kind {
            "Name" => self.ident.as_deref(),
            "Attribute" | "Subscript" | "Starred" => self.first_field("value")?.root_name(),
            "Call" => self.first_field("func")?.root_name(),
            _ => None,
        }
    }

    pub fn str_literal(&self) -> Option<&str> {
        match &self.literal {
            Some(Literal::Str(s)) if self.kind == "Constant" => Some(s),
            _ => None,
        }
    }

    pub fn is_scope(&self) -> bool {
        matches!(
            self.kind,
            "FunctionDef" | "AsyncFunctionDef" | "ClassDef" | "Lambda" | "ListComp" | "SetComp" | "DictComp" | "GeneratorExp"
        )
    }
}

fn span_of(r: rustpython_parser::text_size::TextRange) -> Option<(usize, usize)> {
    Some((r.start().to_usize(), r.end().to_usize()))
}

pub(crate) fn module(body: &[ast::Stmt]) -> SyntaxNode {
    SyntaxNode::new("Module", "", None).with_all(body.iter().map(|s| stmt(s, "body")))
}

fn stmts<'a>(body: &'a [ast::Stmt], field: &'static str) -> impl Iterator<Item = SyntaxNode> + 'a {
    body.iter().map(move |s| stmt(s, field))
}

fn exprs<'a>(list: &'a [ast::Expr], field: &'static str) -> impl Iterator<Item = SyntaxNode> + 'a {
    list.iter().map(move |e| expr(e, field))
}

fn opt_expr(e: &Option<Box<ast::Expr>>, field: &'static str) -> Option<SyntaxNode> {
    e.as_deref().map(|e| expr(e, field))
}

pub(crate) fn stmt(s: &ast::Stmt, field: &'static str) -> SyntaxNode {
    use ast::Stmt as S;
    let sp = span_of(s.range());
    match s {
        S::FunctionDef(d) => SyntaxNode::new("FunctionDef", field, sp)
            .ident(d.name.as_str())
            .with(arguments(&d.args, "args"))
            .with_all(stmts(&d.body, "body"))
            .with_all(exprs(&d.decorator_list, "decorator_list"))
            .with_opt(opt_expr(&d.returns, "returns")),
        S::AsyncFunctionDef(d) => SyntaxNode::new("AsyncFunctionDef", field, sp)
            .ident(d.name.as_str())
            .with(arguments(&d.args, "args"))
            .with_all(stmts(&d.body, "body"))
            .with_all(exprs(&d.decorator_list, "decorator_list"))
            .with_opt(opt_expr(&d.returns, "returns")),
        S::ClassDef(d) => SyntaxNode::new("ClassDef", field, sp)
            .ident(d.name.as_str())
            .with_all(exprs(&d.bases, "bases"))
            .with_all(d.keywords.iter().map(|k| keyword(k, "keywords")))
            .with_all(stmts(&d.body, "body"))
            .with_all(exprs(&d.decorator_list, "decorator_list")),
        S::Return(r) => SyntaxNode::new("Return", field, sp).with_opt(opt_expr(&r.value, "value")),
        S::Delete(d) => SyntaxNode::new("Delete", field, sp).with_all(exprs(&d.targets, "targets")),
        S::Assign(a) => SyntaxNode::new("Assign", field, sp).with_all(exprs(&a.targets, "targets")).with(expr(&a.value, "value")),
        S::TypeAlias(a) => SyntaxNode::new("TypeAlias", field, sp).with(expr(&a.name, "name")).with(expr(&a.value, "value")),
        S::AugAssign(a) => SyntaxNode::new("AugAssign", field, sp)
            .with(expr(&a.target, "target"))
            .with(operator(&a.op, "op"))
            .with(expr(&a.value, "value")),
        S::AnnAssign(a) => SyntaxNode::new("AnnAssign", field, sp)
            .with(expr(&a.target, "target"))
            .with(expr(&a.annotation, "annotation"))
            .with_opt(opt_expr(&a.value, "value")),
        S::For(f) => SyntaxNode::new("For", field, sp)
            .with(expr(&f.target, "target"))
            .with(expr(&f.iter, "iter"))
            .with_all(stmts(&f.body, "body"))
            .with_all(stmts(&f.orelse, "orelse")),
        S::AsyncFor(f) => SyntaxNode::new("AsyncFor", field, sp)
            .with(expr(&f.target, "target"))
            .with(expr(&f.iter, "iter"))
            .with_all(stmts(&f.body, "body"))
            .with_all(stmts(&f.orelse, "orelse")),
        S::While(w) => SyntaxNode::new("While", field, sp)
            .with(expr(&w.test, "test"))
            .with_all(stmts(&w.body, "body"))
            .with_all(stmts(&w.orelse, "orelse")),
        S::If(i) => SyntaxNode::new("If", field, sp)
            .with(expr(&i.test, "test"))
            .with_all(stmts(&i.body, "body"))
            .with_all(stmts(&i.orelse, "orelse")),
        S::With(w) => {
            SyntaxNode::new("With", field, sp).with_all(w.items.iter().map(|i| withitem(i, "items"))).with_all(stmts(&w.body, "body"))
        }
        S::AsyncWith(w) => {
            SyntaxNode::new("AsyncWith", field, sp).with_all(w.items.iter().map(|i| withitem(i, "items"))).with_all(stmts(&w.body, "body"))
        }
        S::Match(m) => SyntaxNode::new("Match", field, sp).with(expr(&m.subject, "subject")).with_all(m.cases.iter().map(|c| {
            SyntaxNode::new("match_case", "cases", None)
                .with(pattern(&c.pattern, "pattern"))
                .with_opt(opt_expr(&c.guard, "guard"))
                .with_all(stmts(&c.body, "body"))
        })),
        S::Raise(r) => SyntaxNode::new("Raise", field, sp).with_opt(opt_expr(&r.exc, "exc")).with_opt(opt_expr(&r.cause, "cause")),
        S::Try(t) => try_node("Try", field, sp, &t.body, &t.handlers, &t.orelse, &t.finalbody),
        S::TryStar(t) => try_node("TryStar", field, sp, &t.body, &t.handlers, &t.orelse, &t.finalbody),
        S::Assert(a) => SyntaxNode::new("Assert", field, sp).with(expr(&a.test, "test")).with_opt(opt_expr(&a.msg, "msg")),
        S::Import(i) => SyntaxNode::new("Import", field, sp).with_all(i.names.iter().map(alias)),
        S::ImportFrom(i) => {
            let mut n = SyntaxNode::new("ImportFrom", field, sp).with_all(i.names.iter().map(alias));
            let dots = ".".repeat(i.level.map_or(0, |l| l.to_u32() as usize));
            let module = i.module.as_ref().map_or("", |m| m.as_str());
            n.ident = Some(format!("{dots}{module}"));
            n
        }
        S::Global(g) => {
            let mut n = SyntaxNode::new("Global", field, sp);
            n.names = g.names.iter().map(|i| i.to_string()).collect();
            n
        }
        S::Nonlocal(g) => {
            let mut n = SyntaxNode::new("Nonlocal", field, sp);
            n.names = g.names.iter().map(|i| i.to_string()).collect();
            n
        }
        S::Expr(e) => SyntaxNode::new("Expr", field, sp).with(expr(&e.value, "value")),
        S::Pass(_) => SyntaxNode::new("Pass", field, sp),
        S::Break(_) => SyntaxNode::new("Break", field, sp),
        S::Continue(_) => SyntaxNode::new("Continue", field, sp),
    }
}

fn try_node(
    kind: &'static str,
    field: &'static str,
    sp: Option<(usize, usize)>,
    body: &[ast::Stmt],
    handlers: &[ast::ExceptHandler],
    orelse: &[ast::Stmt],
    finalbody: &[ast::Stmt],
) -> SyntaxNode {
    SyntaxNode::new(kind, field, sp)
        .with_all(stmts(body, "body"))
        .with_all(handlers.iter().map(|h| {
            let ast::ExceptHandler::ExceptHandler(h) = h;
            let mut n = SyntaxNode::new("ExceptHandler", "handlers", span_of(h.range))
                .with_opt(opt_expr(&h.type_, "type"))
                .with_all(stmts(&h.body, "body"));
            n.ident = h.name.as_ref().map(|i| i.to_string());
            n
        }))
        .with_all(stmts(orelse, "orelse"))
        .with_all(stmts(finalbody, "finalbody"))
}

fn alias(a: &ast::Alias) -> SyntaxNode {
    let mut n = SyntaxNode::new("alias", "names", span_of(a.range)).ident(a.name.as_str());
    n.asname = a.asname.as_ref().map(|i| i.to_string());
    n
}

fn withitem(i: &ast::WithItem, field: &'static str) -> SyntaxNode {
    SyntaxNode::new("withitem", field, None)
        .with(expr(&i.context_expr, "context_expr"))
        .with_opt(opt_expr(&i.optional_vars, "optional_vars"))
}

fn keyword(k: &ast::Keyword, field: &'static str) -> SyntaxNode {
    let mut n = SyntaxNode::new("keyword", field, span_of(k.range)).with(expr(&k.value, "value"));
    n.ident = k.arg.as_ref().map(|i| i.to_string());
    n
}

fn arg(a: &ast::Arg, field: &'static str) -> SyntaxNode {
    SyntaxNode::new("arg", field, span_of(a.range)).ident(a.arg.as_str()).with_opt(opt_expr(&a.annotation, "annotation"))
}

fn arguments(a: &ast::Arguments, field: &'static str) -> SyntaxNode {
    let py = a.to_python_arguments();
    SyntaxNode::new("arguments", field, None)
        .with_all(py.posonlyargs.iter().map(|x| arg(x, "posonlyargs")))
        .with_all(py.args.iter().map(|x| arg(x, "args")))
        .with_opt(py.vararg.as_deref().map(|x| arg(x, "vararg")))
        .with_all(py.kwonlyargs.iter().map(|x| arg(x, "kwonlyargs")))
        .with_all(exprs(&py.kw_defaults, "kw_defaults"))
        .with_opt(py.kwarg.as_deref().map(|x| arg(x, "kwarg")))
        .with_all(exprs(&py.defaults, "defaults"))
}

fn comprehension(c: &ast::Comprehension, field: &'static str) -> SyntaxNode {
    SyntaxNode::new("comprehension", field, None).with(expr(&c.target, "target")).with(expr(&c.iter, "iter")).with_all(exprs(&c.ifs, "ifs"))
}

fn pattern(p: &ast::Pattern, field: &'static str) -> SyntaxNode {
    use ast::Pattern as P;
    let sp = span_of(p.range());
    match p {
        P::MatchValue(v) => SyntaxNode::new("MatchValue", field, sp).with(expr(&v.value, "value")),
        P::MatchSingleton(_) => SyntaxNode::new("MatchSingleton", field, sp),
        P::MatchSequence(s) => SyntaxNode::new("MatchSequence", field, sp).with_all(s.patterns.iter().map(|p| pattern(p, "patterns"))),
        P::MatchMapping(m) => SyntaxNode::new("MatchMapping", field, sp)
            .with_all(exprs(&m.keys, "keys"))
            .with_all(m.patterns.iter().map(|p| pattern(p, "patterns"))),
        P::MatchClass(c) => SyntaxNode::new("MatchClass", field, sp)
            .with(expr(&c.cls, "cls"))
            .with_all(c.patterns.iter().map(|p| pattern(p, "patterns")))
            .with_all(c.kwd_patterns.iter().map(|p| pattern(p, "kwd_patterns"))),
        P::MatchStar(s) => {
            let mut n = SyntaxNode::new("MatchStar", field, sp);
            n.ident = s.name.as_ref().map(|i| i.to_string());
            n
        }
        P::MatchAs(a) => {
            let mut n = SyntaxNode::new("MatchAs", field, sp).with_opt(a.pattern.as_deref().map(|p| pattern(p, "pattern")));
            n.ident = a.name.as_ref().map(|i| i.to_string());
            n
        }
        P::MatchOr(o) => SyntaxNode::new("MatchOr", field, sp).with_all(o.patterns.iter().map(|p| pattern(p, "patterns"))),
    }
}

fn literal(c: &ast::Constant) -> Literal {
    match c {
        ast::Constant::None => Literal::None,
        ast::Constant::Bool(b) => Literal::Bool(*b),
        ast::Constant::Str(s) => Literal::Str(s.clone()),
        ast::Constant::Int(i) => i.to_string().parse().map_or(Literal::Other, Literal::Int),
        ast::Constant::Float(f) => Literal::Float(*f),
        _ => Literal::Other,
    }
}

pub(crate) fn expr(e: &ast::Expr, field: &'static str) -> SyntaxNode {
    use ast::Expr as E;
    let sp = span_of(e.range());
    match e {
        E::BoolOp(b) => SyntaxNode::new("BoolOp", field, sp)
            .with(SyntaxNode::leaf(
                match b.op {
                    ast::BoolOp::And => "And",
                    ast::BoolOp::Or => "Or",
                },
                "op",
            ))
            .with_all(exprs(&b.values, "values")),
        E::NamedExpr(n) => SyntaxNode::new("NamedExpr", field, sp).with(expr(&n.target, "target")).with(expr(&n.value, "value")),
        E::BinOp(b) => {
            SyntaxNode::new("BinOp", field, sp).with(expr(&b.left, "left")).with(operator(&b.op, "op")).with(expr(&b.right, "right"))
        }
        E::UnaryOp(u) => SyntaxNode::new("UnaryOp", field, sp)
            .with(SyntaxNode::leaf(
                match u.op {
                    ast::UnaryOp::Invert => "Invert",
                    ast::UnaryOp::Not => "Not",
                    ast::UnaryOp::UAdd => "UAdd",
                    ast::UnaryOp::USub => "USub",
                },
                "op",
            ))
            .with(expr(&u.operand, "operand")),
        E::Lambda(l) => SyntaxNode::new("Lambda", field, sp).with(arguments(&l.args, "args")).with(expr(&l.body, "body")),
        E::IfExp(i) => {
            SyntaxNode::new("IfExp", field, sp).with(expr(&i.test, "test")).with(expr(&i.body, "body")).with(expr(&i.orelse, "orelse"))
        }
        E::Dict(d) => SyntaxNode::new("Dict", field, sp)
            .with_all(d.keys.iter().flatten().map(|k| expr(k, "keys")))
            .with_all(exprs(&d.values, "values")),
        E::Set(s) => SyntaxNode::new("Set", field, sp).with_all(exprs(&s.elts, "elts")),
        E::ListComp(c) => SyntaxNode::new("ListComp", field, sp)
            .with(expr(&c.elt, "elt"))
            .with_all(c.generators.iter().map(|g| comprehension(g, "generators"))),
        E::SetComp(c) => SyntaxNode::new("SetComp", field, sp)
            .with(expr(&c.elt, "elt"))
            .with_all(c.generators.iter().map(|g| comprehension(g, "generators"))),
        E::DictComp(c) => SyntaxNode::new("DictComp", field, sp)
            .with(expr(&c.key, "key"))
            .with(expr(&c.value, "value"))
            .with_all(c.generators.iter().map(|g| comprehension(g, "generators"))),
        E::GeneratorExp(c) => SyntaxNode::new("GeneratorExp", field, sp)
            .with(expr(&c.elt, "elt"))
            .with_all(c.generators.iter().map(|g| comprehension(g, "generators"))),
        E::Await(a) => SyntaxNode::new("Await", field, sp).with(expr(&a.value, "value")),
        E::Yield(y) => SyntaxNode::new("Yield", field, sp).with_opt(opt_expr(&y.value, "value")),
        E::YieldFrom(y) => SyntaxNode::new("YieldFrom", field, sp).with(expr(&y.value, "value")),
        E::Compare(c) => SyntaxNode::new("Compare", field, sp)
            .with(expr(&c.left, "left"))
            .with_all(c.ops.iter().map(|op| SyntaxNode::leaf(cmpop(op), "ops")))
            .with_all(exprs(&c.comparators, "comparators")),
        E::Call(c) => SyntaxNode::new("Call", field, sp)
            .with(expr(&c.func, "func"))
            .with_all(exprs(&c.args, "args"))
            .with_all(c.keywords.iter().map(|k| keyword(k, "keywords"))),
        E::FormattedValue(f) => {
            SyntaxNode::new("FormattedValue", field, sp).with(expr(&f.value, "value")).with_opt(opt_expr(&f.format_spec, "format_spec"))
        }
        E::JoinedStr(j) => SyntaxNode::new("JoinedStr", field, sp).with_all(exprs(&j.values, "values")),
        E::Constant(c) => {
            let mut n = SyntaxNode::new("Constant", field, sp);
            n.literal = Some(literal(&c.value));
            n
        }
        E::Attribute(a) => SyntaxNode::new("Attribute", field, sp).ident(a.attr.as_str()).ctx(&a.ctx).with(expr(&a.value, "value")),
        E::Subscript(s) => SyntaxNode::new("Subscript", field, sp).ctx(&s.ctx).with(expr(&s.value, "value")).with(expr(&s.slice, "slice")),
        E::Starred(s) => SyntaxNode::new("Starred", field, sp).ctx(&s.ctx).with(expr(&s.value, "value")),
        E::Name(n) => SyntaxNode::new("Name", field, sp).ident(n.id.as_str()).ctx(&n.ctx),
        E::List(l) => SyntaxNode::new("List", field, sp).ctx(&l.ctx).with_all(exprs(&l.elts, "elts")),
        E::Tuple(t) => SyntaxNode::new("Tuple", field, sp).ctx(&t.ctx).with_all(exprs(&t.elts, "elts")),
        E::Slice(s) => SyntaxNode::new("Slice", field, sp)
            .with_opt(opt_expr(&s.lower, "lower"))
            .with_opt(opt_expr(&s.upper, "upper"))
            .with_opt(opt_expr(&s.step, "step")),
    }
}

fn operator(op: &ast::Operator, field: &'static str) -> SyntaxNode {
    use ast::Operator as O;
    SyntaxNode::leaf(
        match op {
            O::Add => "Add",
            O::Sub => "Sub",
            O::Mult => "Mult",
            O::MatMult => "MatMult",
            O::Div => "Div",
            O::Mod => "Mod",
            O::Pow => "Pow",
            O::LShift => "LShift",
            O::RShift => "RShift",
            O::BitOr => "BitOr",
            O::BitXor => "BitXor",
            O::BitAnd => "BitAnd",
            O::FloorDiv => "FloorDiv",
        },
        field,
    )
}

fn cmpop(op: &ast::CmpOp) -> &'static str {
    use ast::CmpOp as C;
    match op {
        C::Eq => "Eq",
        C::NotEq => "NotEq",
        C::Lt => "Lt",
        C::LtE => "LtE",
        C::Gt => "Gt",
        C::GtE => "GtE",
        C::Is => "Is",
        C::IsNot => "IsNot",
        C::In => "In",
        C::NotIn => "NotIn",
    }
}
