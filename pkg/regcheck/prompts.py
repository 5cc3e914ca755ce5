"""Prompt templates.

Every prompt that leaves regcheck is rendered here, so the wording the
models see can be reviewed in one place.  Templates use ``str.format``
fields; none of them contains literal braces.
"""

from typing import Sequence

CHOICE_FORMAT = "Choice: [A. Prohibited | B. Permitted | C. Not related ]"

_OPTIONS = """(A) The event is prohibited by HIPAA.
(B) The event is permitted by HIPAA.
(C) The event is not related to HIPAA."""

_DETERMINE = (
    "Determine the relationship between the provided event and HIPAA "
    "regulations. You have three options for your conclusion:\n" + _OPTIONS
)

DIRECT = _DETERMINE + """

Event:
{event}

Output Format:

""" + CHOICE_FORMAT + "\n"

COT_AUTO = _DETERMINE + """

Event:
{event}

Let's approach this step by step:

Planning: Outline the steps (no more than 6) necessary to analyze the relationship of the event with HIPAA standards.
Execution: Implement these steps to gather information and assess the specific aspects of the event.
Decision Making: Based on the information collected and analyzed, determine if there was a HIPAA violation.
Output Format:

Plans: [List the steps planned to evaluate the event:]
plan 1 - ...
plan 2 - ...
....
plan N - ...

Execution: [Document the outcomes from executing your plans:]
plan 1 - ....
plan 2 - ....
....
plan N - ...

""" + CHOICE_FORMAT + "\n"

COT_MANUAL = _DETERMINE + """

Event:
{event}

Let's approach this step by step:

1. Identify Relevant HIPAA Regulations: Start by researching and compiling the HIPAA regulations that could be relevant to the event, particularly focusing on privacy, security, and breach notification rules.
2. Examine the Nature of Information: Determine if the event involves any Protected Health Information (PHI), such as names, medical records, or other personal identifiers.
3. Evaluate HIPAA Applicability: Assess whether the event actually falls under the jurisdiction of HIPAA based on the nature of the entity involved and the type of information handled.
4. Assess Authorization and Consent: If HIPAA is applicable, verify if the recipient of the information was authorized and check for valid patient consent or another legal basis for sharing PHI.
5. Evaluate Security Measures: If applicable, review the security measures used during the information transmission to ensure they comply with HIPAA's security protocols.

Output Format:

Execution: [Document the outcomes from executing your plans:]
plan 1 - ....
plan 2 - ....
....
plan 5 - ....

""" + CHOICE_FORMAT + "\n"

AGENT_IDS = """Read the event described below and generate the applicable HIPAA regulations (no more than {max_n}). This regulation will assist in determining if the event violates HIPAA security principles in a downstream task.

Event: {event}

Let's complete it step by step:
1. Review the Event Details: Understand the specifics of the event, including the type of information sent, the method of transmission, and the parties involved.
2. Identify Key HIPAA Concerns: Based on the event, identify potential concerns related to privacy, security, and breach notifications.
3. Retrieve Relevant Regulations: Consult the HIPAA regulatory text to find sections specifically addressing the identified concerns. Consider feedback to avoid repeating previously rejected regulations.

Output Format:

Execution: [Document the outcomes from executing the steps:]
1. - ...
2. - ...
...
4. - ...

Generated Related HIPAA Regulations(e.g. re"[0-9]+\\.[0-9]+(\\([0-9A-Za-zivx]+\\))*" - xxxx):
1. Section Number - Section Content
...
N. Section Number - Section Content

Output:
"""

LAW_FILTER = """Given a regulation and an information sending or requesting event, identify if the given regulation is relevant to the event. The process involves the following steps:

1. **Understand the Event**:
   - Extract key details from the description of the event, such as the type of information being exchanged, the parties involved, and the context or domain (e.g., healthcare, finance, education).

2. **Analyze The Regulation**:
   - For given regulation, determine its scope and main focus by reading the summary or key sections. Identify the primary subject matter, applicable contexts, or targeted stakeholders.

3. **Relevance Matching**:
   - Compare the key details of the event with the main focus of the regulation. Consider:
     - Does the regulation explicitly address scenarios similar to the event?
     - Is the regulation intended for the context or domain of the event?
     - Are the parties involved in the event the type of entities the regulation aims to govern?

4. **Filtering Decision**:
   - If a regulation's focus aligns well with the event's details, please answer yes.
   - If there is little to no alignment, such as different contexts, unrelated subjects, or inappropriate scopes, please answer no.

Event: {event}

HIPAA Regulation:
{candidate}

Note:
It is possible that the event may be completely unrelated to the HIPAA regulations provided. In such cases, just answer NONE.

Question:
Is the given HIPAA Regulation relevant with the given event?

Output Format:
First answer yes or no, then explain the reason based on the given steps.
"""

DECISION_IDS = _DETERMINE + """

I will offer you some retrieved HIPAA regulations for reference(Not 100% correct.) Consider the specifics of the event, offered sections of HIPAA regulations.

Event:
{event}

HIPAA Regulations Reference:
{references}

Let's complete it step by step:
1. Understand the Event: Read the description of the event carefully to know exactly what happened.
2. Look Up HIPAA Rules: Get the HIPAA regulations that are provided and find the parts that might relate to the event.
3. Check for Key Points: Focus on important details of the event like the kind of information involved, who is handling it, and how it's being shared or used.
4. Compare the Event with the Rules: See how the details of the event stack up against the HIPAA rules to find any matches or issues.


Output Format:

Execution: [Document the outcomes from executing the steps:]
1. - ...
2. - ...
...
4. - ...

""" + CHOICE_FORMAT + "\n"

DECISION_CONTENT = """Assess the relationship between the provided event and HIPAA regulations, and select one of the following conclusions:

""" + _OPTIONS + """

You will be given some sections of HIPAA regulations for reference (Note: these references may not be 100% accurate). Your task is to consider the specifics of the event in light of these sections. Remember that the provided references are not exhaustive, and the presence of a regulation does not automatically imply relevance or violation.

Event:
{event}

HIPAA Regulations Reference:
{references}

Let's complete it step by step:
1. Analyze the specific details of the event by identifying who is involved (sender and recipient), what information is being sent or requested, and for what purpose.
2. Compare key elements of the event with HIPAA rules, identifying if they involve the use, disclosure, or protection of Protected Health Information (PHI) as defined by HIPAA.
3. Evaluate the provided HIPAA regulation excerpts to see if they directly relate to the event.
4. Consider if there are other HIPAA rules not mentioned in the excerpts that might apply.
5. Conclude based on the comprehensive analysis whether the event is in compliance, in violation, or unrelated to HIPAA.

Output Format:

Execution: [Document the outcomes from executing each step]:
1. - ...
2. - ...
...
5. - ...


""" + CHOICE_FORMAT + "\n"

EXPLANATION = """I will provide you with an event concerning the delivery of information. Your task is to generate content related to this event by applying your knowledge of HIPAA regulations.

To ensure the content is relevant and accurate, follow these steps:

1. Understand the Event: Clearly define and understand the specifics of the event. Identify the key players involved, the type of information being handled, and the context in which it is being delivered.
2. Apply HIPAA Knowledge: Utilize your understanding of HIPAA regulations, focusing on privacy, security, and the minimum necessary information principles. Ensure that your content addresses these aspects in the context of the event.

Event Details:
{event}

Output Format:

Execution:

1. Identify the key players, type of information, and context.
2. Apply relevant HIPAA principles to the event.

Generated HIPAA Content:
1. HIPAA Privacy Rule: ...
2. HIPAA Security Rule: ...
3. Minimum Necessary Standard:...

References:
List the specific HIPAA regulations you consulted to generate the content.
"""

NO_REFERENCES = "No relevant regulations found."

_Q1 = """Q1. ("Prohibit", "Permit" or "General Definition") Ascertain whether the regulation {regulation_id} pertains to scenes that are:
A. Prohibit by law
B. Permit by law
C. General Definition"""

_Q2 = """Q2. (Identify the stakeholders related to {subject}) Identify the stakeholders related to {subject}. Your response must include the following seven characteristics about the flow of private information: [Sender, Sender Role, Recipient, Recipient Role, Subject, Subject Role, Information Type, Consent Form, Purpose]. Answer 'None' if no information about characteristics is present.

The "Sender," "Recipient," and "Subject" fields indicate the sender, recipient, and the data subject during information transmission.
The "Sender Role", "Recipient Role" and "Subject Role" fields indicate the role of the sender, recipient and subject (e.g., doctor, patient).
The "Information Type" field defines what kind of information would be passed, such as name or location.
The "Consent Form" field indicates whether the sender has obtained consent from the subject to send the message. If consent is required, you should answer "Consent" for a flexible requirement or "Authorization" for a formal and mandatory process required by the context. If consent is not related to the context, you should answer "None."
The "Purpose" field indicates the purpose of the mentioned information transmission, such as treatment, payment, or health care operations."""

_Q3_Q4 = """Q3: Are the Sender and Subject the same person?
A. Yes
B. No
C. Not Sure

Q4: Is Recipient and Subject the same person?
A. Yes
B. No
C. Not Sure"""

_Q5 = """Q5. (Identify the relation between {regulation_id} other sub-parts referred to in the context) Identify the relation between {regulation_id} and referred {references}. For each reference in {references}, according to the context given, determine if the reference is an exception of {regulation_id} or support the argument of {regulation_id}. Answer with "Exception" or "Support" for each reference."""

_Q2_ANSWER = """Q2:
Sender: ...
Sender Role: ...
Recipient: ...
Recipient Role: ...
Subject: ...
Subject Role: ...
Information Type: ...
Consent Form: ...
Purpose: ..."""


def direct_prompt(event: str) -> str:
    return DIRECT.format(event=event)


def cot_auto_prompt(event: str) -> str:
    return COT_AUTO.format(event=event)


def cot_manual_prompt(event: str) -> str:
    return COT_MANUAL.format(event=event)


def agent_ids_prompt(event: str, max_n: int) -> str:
    return AGENT_IDS.format(event=event, max_n=max_n)


def law_filter_prompt(event: str, candidate: str) -> str:
    return LAW_FILTER.format(event=event, candidate=candidate)


def decision_prompt(event: str, references: str, with_content: bool) -> str:
    """The final three-way decision prompt; ``references`` is preformatted."""
    template = DECISION_CONTENT if with_content else DECISION_IDS
    return template.format(event=event, references=references or NO_REFERENCES)


def explanation_prompt(event: str) -> str:
    return EXPLANATION.format(event=event)


def questionnaire_prompt(regulation_id: str, content: str, references: Sequence[str]) -> str:
    """Q1 to Q5 about one leaf; Q5 is left out when nothing is referenced."""
    questions = [
        _Q1.format(regulation_id=regulation_id),
        _Q2.format(subject="the regulation " + regulation_id),
        _Q3_Q4,
    ]
    answer = ["Q1: <A, B or C>", _Q2_ANSWER, "Q3: <A, B or C>", "Q4: <A, B or C>"]
    if references:
        listed = "[" + ", ".join(references) + "]"
        questions.append(_Q5.format(regulation_id=regulation_id, references=listed))
        answer.append("Q5:\n" + "\n".join(r + ": <Exception or Support>" for r in references))
    return (
        "As a legal expert specializing in the HIPAA Privacy Rule, your task is "
        "to read a specific paragraph of the regulation\n"
        "{}:\n{}\n\nNow complete the following questions one by one:\n\n{}\n\n"
        "Answer Format:\n{}\n".format(
            regulation_id, content, "\n\n".join(questions), "\n".join(answer)
        )
    )


def event_questionnaire_prompt(event: str) -> str:
    """Q2 to Q4 about an event to be judged."""
    return (
        "As a legal expert specializing in the HIPAA Privacy Rule, your task is "
        "to read an event concerning the delivery of information:\n"
        "{}\n\nNow complete the following questions one by one:\n\n{}\n\n{}\n\n"
        "Answer Format:\n{}\nQ3: <A, B or C>\nQ4: <A, B or C>\n".format(
            event, _Q2.format(subject="the event"), _Q3_Q4, _Q2_ANSWER
        )
    )
