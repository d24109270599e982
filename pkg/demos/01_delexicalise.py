"""Parsing, tokenising and delexicalising one restaurant description.

Run with ``python3 demos/01_delexicalise.py``.
"""
from nlgqe import parse_mr, tokenize
from nlgqe.data import TextOutput
from nlgqe.delex import delexicalize, relexicalize

mr = parse_mr("inform(name='The Eagle', eat_type=pub, area=riverside, near='Burger King')")
text = TextOutput("The Eagle is a pub by the riverside, close to Burger King.")

print("MR slots:       ", mr.slots)
print("tokens:         ", tokenize(text.raw))

# Names are replaced by placeholders; generic values such as "riverside" survive.
dmr, dtext, subs = delexicalize(mr, text)
print("delexicalised MR:", dmr.canonical())
print("delexicalised:   ", " ".join(dtext.tokens))

# The substitutions record is enough to undo the operation.
print("restored:        ", relexicalize(dtext, subs).raw)
